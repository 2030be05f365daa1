#pragma once

#include <functional>

#include "auregress/ops.hpp"

namespace auregress {

namespace detail {

struct GradCheckCase {
    std::vector<TensorPtr> inputs;
    std::function<TensorPtr()> build; // rebuilds the scalar objective from current input values
};

inline TensorPtr gc_input(const Shape& s, Rng& rng, bool kink_free = false) {
    std::vector<double> v(static_cast<std::size_t>(numel(s)));
    for (auto& x : v) {
        x = rng.uniform(-1.0, 1.0);
        if (kink_free && std::abs(x) < 0.05) x += x >= 0.0 ? 0.1 : -0.1;
    }
    return make_tensor(s, std::move(v), true);
}

// fixed random projection so elementwise sign errors cannot cancel
inline std::function<TensorPtr(const TensorPtr&)> gc_projector(Rng& rng) {
    auto rng_copy = std::make_shared<Rng>(rng.fork(99));
    return [rng_copy](const TensorPtr& out) -> TensorPtr {
        if (out->size() == 1) return out;
        static thread_local std::vector<double> proj;
        Rng r = *rng_copy;
        std::vector<double> p(out->value.size());
        for (auto& x : p) x = r.uniform(-1.0, 1.0);
        auto pn = make_tensor({out->size()}, std::move(p), false);
        return sum(mul(reshape(out, {out->size()}), pn));
    };
}

inline GradCheckCase make_grad_check_case(OpKind kind, std::uint64_t seed) {
    Rng rng(0x5EED0000u + seed * 7919u);
    auto project = gc_projector(rng);
    const bool variant = seed % 2 == 1;
    GradCheckCase c;
    switch (kind) {
        case OpKind::conv2d: {
            auto x = gc_input({1, 2, 8, 8}, rng);
            auto w = gc_input(variant ? Shape{3, 2, 4, 4} : Shape{3, 2, 3, 3}, rng);
            auto b = gc_input({3}, rng);
            const std::int64_t s = variant ? 2 : 1;
            c.inputs = {x, w, b};
            c.build = [=]() { return project(conv2d(x, w, b, s, 1)); };
            break;
        }
        case OpKind::conv_transpose2d: {
            auto x = gc_input({1, 3, 4, 4}, rng);
            auto w = gc_input(variant ? Shape{3, 2, 4, 4} : Shape{3, 2, 3, 3}, rng);
            auto b = gc_input({2}, rng);
            const std::int64_t s = variant ? 2 : 1;
            c.inputs = {x, w, b};
            c.build = [=]() { return project(conv_transpose2d(x, w, b, s, 1)); };
            break;
        }
        case OpKind::fully_connected: {
            auto x = gc_input({2, 4}, rng);
            auto w = gc_input({3, 4}, rng);
            auto b = gc_input({3}, rng);
            c.inputs = {x, w, b};
            c.build = [=]() { return project(fully_connected(x, w, b)); };
            break;
        }
        case OpKind::instance_norm: {
            auto x = gc_input({1, 2, 4, 4}, rng);
            auto g = gc_input({2}, rng);
            auto b = gc_input({2}, rng);
            c.inputs = {x, g, b};
            c.build = [=]() { return project(instance_norm(x, g, b)); };
            break;
        }
        case OpKind::batch_norm: {
            auto x = variant ? gc_input({2, 2, 3, 3}, rng) : gc_input({4, 3}, rng);
            const std::int64_t C = x->shape[1];
            auto g = gc_input({C}, rng);
            auto b = gc_input({C}, rng);
            c.inputs = {x, g, b};
            c.build = [=]() { return project(batch_norm(x, g, b, nullptr, true)); };
            break;
        }
        case OpKind::relu: {
            auto x = gc_input({2, 3, 4, 4}, rng, true);
            c.inputs = {x};
            c.build = [=]() { return project(relu(x)); };
            break;
        }
        case OpKind::sigmoid: {
            auto x = gc_input({2, 5}, rng);
            c.inputs = {x};
            c.build = [=]() { return project(sigmoid(x)); };
            break;
        }
        case OpKind::tanh: {
            auto x = gc_input({2, 5}, rng);
            c.inputs = {x};
            c.build = [=]() { return project(tanh(x)); };
            break;
        }
        case OpKind::softmax: {
            auto x = gc_input({2, 5}, rng);
            c.inputs = {x};
            c.build = [=]() { return project(softmax(x, 1)); };
            break;
        }
        case OpKind::log_softmax: {
            auto x = gc_input({2, 5}, rng);
            c.inputs = {x};
            c.build = [=]() { return project(log_softmax(x, 1)); };
            break;
        }
        case OpKind::global_avg_pool: {
            auto x = gc_input({1, 3, 4, 4}, rng);
            c.inputs = {x};
            c.build = [=]() { return project(global_avg_pool(x)); };
            break;
        }
        case OpKind::avg_pool: {
            auto x = variant ? gc_input({1, 2, 2, 2}, rng) : gc_input({1, 2, 6, 6}, rng);
            const std::int64_t o = variant ? 4 : 3; // also covers the upsampling path
            c.inputs = {x};
            c.build = [=]() { return project(avg_pool(x, o, o)); };
            break;
        }
        case OpKind::elementwise_mul: {
            auto a = gc_input({2, 3, 2, 2}, rng);
            auto b = variant ? gc_input({2, 1, 2, 2}, rng) : gc_input({2, 3, 2, 2}, rng);
            c.inputs = {a, b};
            c.build = [=]() { return project(mul(a, b)); };
            break;
        }
        case OpKind::elementwise_add: {
            auto a = gc_input({2, 3, 2, 2}, rng);
            auto b = variant ? gc_input({1, 3, 1, 2}, rng) : gc_input({2, 3, 2, 2}, rng);
            c.inputs = {a, b};
            c.build = [=]() { return project(add(a, b)); };
            break;
        }
        case OpKind::concat: {
            auto a = gc_input({2, 3}, rng);
            auto b = gc_input({2, 2}, rng);
            auto d = gc_input({2, 4}, rng);
            c.inputs = {a, b, d};
            c.build = [=]() { return project(concat({a, b, d}, 1)); };
            break;
        }
        case OpKind::l1_distance: {
            // keep |a-b| clear of the kink relative to the FD step
            auto a = gc_input({2, 6}, rng);
            auto b = gc_input({2, 6}, rng);
            for (std::size_t i = 0; i < a->value.size(); ++i) {
                double d = a->value[i] - b->value[i];
                if (std::abs(d) < 0.05) a->value[i] += d >= 0.0 ? 0.1 : -0.1;
            }
            c.inputs = {a, b};
            c.build = [=]() { return sum(l1_distance(a, b)); };
            break;
        }
        case OpKind::l2_distance: {
            auto a = gc_input({2, 6}, rng);
            auto b = gc_input({2, 6}, rng);
            c.inputs = {a, b};
            c.build = [=]() { return project(l2_distance(a, b)); };
            break;
        }
        case OpKind::cosine_similarity: {
            auto a = gc_input({8}, rng);
            auto b = gc_input({8}, rng);
            c.inputs = {a, b};
            c.build = [=]() { return sum(cosine_similarity(a, b)); };
            break;
        }
        case OpKind::mean: {
            auto x = gc_input({3, 4}, rng);
            c.inputs = {x};
            c.build = [=]() { return mean(x); };
            break;
        }
        case OpKind::sum: {
            auto x = gc_input({3, 4}, rng);
            c.inputs = {x};
            c.build = [=]() { return sum(x); };
            break;
        }
        case OpKind::affine: {
            auto x = gc_input({2, 5}, rng);
            c.inputs = {x};
            c.build = [=]() { return project(affine(x, 1.7, -0.3)); };
            break;
        }
        case OpKind::reshape: {
            auto x = gc_input({2, 6}, rng);
            c.inputs = {x};
            c.build = [=]() { return project(reshape(x, {3, 4})); };
            break;
        }
        case OpKind::l2_normalize: {
            auto x = gc_input({2, 6}, rng);
            c.inputs = {x};
            c.build = [=]() { return project(l2_normalize(x)); };
            break;
        }
        case OpKind::leaf:
            throw std::invalid_argument("grad_check: leaf has no adjoint");
    }
    return c;
}

} // namespace detail

// Max over all input coordinates of |analytic - numeric| / max(1, |numeric|),
// central differences with the given step.
inline double grad_check(OpKind kind, std::uint64_t seed, double eps = 1e-3) {
    if (!(eps > 0.0 && eps <= 1e-2))
        throw std::invalid_argument("grad_check: eps must lie in (0, 1e-2]");
    auto c = detail::make_grad_check_case(kind, seed);

    for (auto& in : c.inputs) in->zero_grad();
    auto out = c.build();
    backward(out);

    double max_err = 0.0;
    for (auto& in : c.inputs) {
        for (std::size_t i = 0; i < in->value.size(); ++i) {
            const double keep = in->value[i];
            in->value[i] = keep + eps;
            const double fp = c.build()->value[0];
            in->value[i] = keep - eps;
            const double fm = c.build()->value[0];
            in->value[i] = keep;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double err = std::abs(in->grad[i] - numeric) / std::max(1.0, std::abs(numeric));
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

inline const std::vector<OpKind>& checkable_op_kinds() {
    static const std::vector<OpKind> kinds = {
        OpKind::conv2d,          OpKind::conv_transpose2d, OpKind::fully_connected,
        OpKind::instance_norm,   OpKind::batch_norm,       OpKind::relu,
        OpKind::sigmoid,         OpKind::tanh,             OpKind::softmax,
        OpKind::log_softmax,     OpKind::global_avg_pool,  OpKind::avg_pool,
        OpKind::elementwise_mul, OpKind::elementwise_add,  OpKind::concat,
        OpKind::l1_distance,     OpKind::l2_distance,      OpKind::cosine_similarity,
        OpKind::mean,            OpKind::sum,              OpKind::affine,
        OpKind::reshape,         OpKind::l2_normalize,
    };
    return kinds;
}

struct GradCheckRow {
    OpKind kind;
    double max_rel_err;
};

inline std::vector<GradCheckRow> grad_check_all(int instances_per_kind = 10, double eps = 1e-3) {
    std::vector<GradCheckRow> rows;
    for (OpKind k : checkable_op_kinds()) {
        double worst = 0.0;
        for (int s = 0; s < instances_per_kind; ++s) worst = std::max(worst, grad_check(k, s, eps));
        rows.push_back({k, worst});
    }
    return rows;
}

} // namespace auregress
