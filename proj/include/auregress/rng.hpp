#pragma once

#include <cstdint>
#include <cmath>

namespace auregress {

// SplitMix64. Hand-rolled so that sampled streams are identical across
// platforms and standard-library versions; std::uniform_real_distribution
// makes no such promise.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    // Box-Muller; one value per call, no cached spare (keeps replay trivial)
    double normal(double mu = 0.0, double sigma = 1.0) {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        double r = std::sqrt(-2.0 * std::log(u1));
        return mu + sigma * r * std::cos(6.283185307179586476925286766559 * u2);
    }

    // derive an independent stream, e.g. one per sample index
    Rng fork(std::uint64_t stream) const {
        Rng r(state_ ^ (0xA24BAED4963EE407ull + stream * 0x9FB21C651E98DF25ull));
        r.next_u64();
        return r;
    }

private:
    std::uint64_t state_;
};

} // namespace auregress
