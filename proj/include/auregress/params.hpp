#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "auregress/rng.hpp"

namespace auregress {

struct ParamSpaceConfig {
    static constexpr int pose_dim = 2; // yaw, pitch
    int au_dim = 6;
    int id_cont_dim = 12;
    int brow_styles = 4;
    int image_size = 64;

    int encoded_dim() const { return pose_dim + au_dim + id_cont_dim + brow_styles; }

    void validate() const {
        if (au_dim < 2) throw std::invalid_argument("param space: au_dim must be >= 2");
        if (brow_styles < 2) throw std::invalid_argument("param space: brow_styles must be >= 2");
        if (id_cont_dim < 1) throw std::invalid_argument("param space: id_cont_dim must be >= 1");
        if (image_size < 32 || image_size % 16 != 0)
            throw std::invalid_argument("param space: image_size must be a multiple of 16 and >= 32");
    }

    static ParamSpaceConfig desk() { return {}; }

    // dims from the source parameter space: 2 + 23 + 208 + one discrete slot
    // over 36 styles = 269-channel encoding; kept for shape-compat tests only
    static ParamSpaceConfig reference() {
        ParamSpaceConfig c;
        c.au_dim = 23;
        c.id_cont_dim = 208;
        c.brow_styles = 36;
        c.image_size = 64;
        return c;
    }
};

// Desk AU channel semantics (frozen; tests rely on this table):
//   0 smile       mouth corners curve upward        -> mouth-mask centroid y decreases
//   1 jaw-drop    mouth opens vertically            -> mouth-mask pixel count increases
//   2 brow-raise  brows shift upward                -> brow-mask centroid y decreases
//   3 eye-close   eyelids close                     -> eye-mask pixel count decreases
//   4 jaw-left    mouth shifts left                 -> mouth-mask centroid x decreases
//   5 jaw-right   mouth shifts right                -> mouth-mask centroid x increases
// Channels 4 and 5 form the mutually exclusive pair required of the space.
enum DeskAu { kAuSmile = 0, kAuJawDrop, kAuBrowRaise, kAuEyeClose, kAuJawLeft, kAuJawRight };

struct FacialParams {
    std::array<double, 2> pose{0.5, 0.5};
    std::vector<double> au;
    std::vector<double> id;
    int brow_style = 0;
    // optional soft style distribution; when non-empty it replaces the
    // one-hot encoding of brow_style (used by the differentiable loop)
    std::vector<double> brow_soft;
};

inline FacialParams base_params(const ParamSpaceConfig& cfg) {
    FacialParams p;
    p.pose = {0.5, 0.5};
    p.au.assign(static_cast<std::size_t>(cfg.au_dim), 0.02);
    p.id.assign(static_cast<std::size_t>(cfg.id_cont_dim), 0.5);
    p.brow_style = 0;
    return p;
}

inline void validate_params(const FacialParams& p, const ParamSpaceConfig& cfg) {
    auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    for (int i = 0; i < 2; ++i)
        if (!in01(p.pose[i]))
            throw std::out_of_range("pose channel " + std::to_string(i) + " out of [0,1]: " +
                                    std::to_string(p.pose[i]));
    if (static_cast<int>(p.au.size()) != cfg.au_dim)
        throw std::invalid_argument("au vector has " + std::to_string(p.au.size()) + " channels, config wants " +
                                    std::to_string(cfg.au_dim));
    for (std::size_t i = 0; i < p.au.size(); ++i)
        if (!in01(p.au[i]))
            throw std::out_of_range("au channel " + std::to_string(i) + " out of [0,1]: " +
                                    std::to_string(p.au[i]));
    if (static_cast<int>(p.id.size()) != cfg.id_cont_dim)
        throw std::invalid_argument("identity vector has " + std::to_string(p.id.size()) +
                                    " channels, config wants " + std::to_string(cfg.id_cont_dim));
    for (std::size_t i = 0; i < p.id.size(); ++i)
        if (!in01(p.id[i]))
            throw std::out_of_range("identity channel " + std::to_string(i) + " out of [0,1]: " +
                                    std::to_string(p.id[i]));
    if (p.brow_style < 0 || p.brow_style >= cfg.brow_styles)
        throw std::out_of_range("brow style " + std::to_string(p.brow_style) + " not in [0," +
                                std::to_string(cfg.brow_styles) + ")");
    if (!p.brow_soft.empty()) {
        if (static_cast<int>(p.brow_soft.size()) != cfg.brow_styles)
            throw std::invalid_argument("soft brow distribution has " + std::to_string(p.brow_soft.size()) +
                                        " slots, config wants " + std::to_string(cfg.brow_styles));
        for (double v : p.brow_soft)
            if (v < 0.0) throw std::out_of_range("soft brow distribution has a negative entry");
    }
}

inline FacialParams sample_params(std::uint64_t seed, const ParamSpaceConfig& cfg) {
    Rng rng(seed);
    FacialParams p;
    p.pose = {rng.uniform(), rng.uniform()};
    p.au.resize(static_cast<std::size_t>(cfg.au_dim));
    for (auto& v : p.au) v = rng.uniform();
    p.id.resize(static_cast<std::size_t>(cfg.id_cont_dim));
    for (auto& v : p.id) v = rng.uniform();
    p.brow_style = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(cfg.brow_styles)));
    return p;
}

// [h | au | id | brow one-hot or soft distribution]
inline std::vector<double> encode_params(const FacialParams& p, const ParamSpaceConfig& cfg) {
    validate_params(p, cfg);
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(cfg.encoded_dim()));
    v.push_back(p.pose[0]);
    v.push_back(p.pose[1]);
    v.insert(v.end(), p.au.begin(), p.au.end());
    v.insert(v.end(), p.id.begin(), p.id.end());
    if (p.brow_soft.empty()) {
        for (int i = 0; i < cfg.brow_styles; ++i) v.push_back(i == p.brow_style ? 1.0 : 0.0);
    } else {
        v.insert(v.end(), p.brow_soft.begin(), p.brow_soft.end());
    }
    return v;
}

// inverse of encode_params; brow becomes the argmax with the soft vector kept
inline FacialParams decode_params(const std::vector<double>& v, const ParamSpaceConfig& cfg) {
    if (static_cast<int>(v.size()) != cfg.encoded_dim())
        throw std::invalid_argument("encoded vector has " + std::to_string(v.size()) + " channels, config wants " +
                                    std::to_string(cfg.encoded_dim()));
    FacialParams p;
    p.pose = {v[0], v[1]};
    p.au.assign(v.begin() + 2, v.begin() + 2 + cfg.au_dim);
    p.id.assign(v.begin() + 2 + cfg.au_dim, v.begin() + 2 + cfg.au_dim + cfg.id_cont_dim);
    p.brow_soft.assign(v.end() - cfg.brow_styles, v.end());
    p.brow_style = 0;
    for (int i = 1; i < cfg.brow_styles; ++i)
        if (p.brow_soft[static_cast<std::size_t>(i)] > p.brow_soft[static_cast<std::size_t>(p.brow_style)])
            p.brow_style = i;
    return p;
}

} // namespace auregress
