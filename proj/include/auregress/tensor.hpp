#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "auregress/rng.hpp"

namespace auregress {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

enum class OpKind {
    leaf,
    conv2d,
    conv_transpose2d,
    fully_connected,
    instance_norm,
    batch_norm,
    relu,
    sigmoid,
    tanh,
    softmax,
    log_softmax,
    global_avg_pool,
    avg_pool,
    elementwise_mul,
    elementwise_add,
    concat,
    l1_distance,
    l2_distance,
    cosine_similarity,
    mean,
    sum,
    affine,
    reshape,
    l2_normalize,
};

inline const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::leaf: return "leaf";
        case OpKind::conv2d: return "conv2d";
        case OpKind::conv_transpose2d: return "conv-transpose2d";
        case OpKind::fully_connected: return "fully-connected";
        case OpKind::instance_norm: return "instance-norm";
        case OpKind::batch_norm: return "batch-norm";
        case OpKind::relu: return "relu";
        case OpKind::sigmoid: return "sigmoid";
        case OpKind::tanh: return "tanh";
        case OpKind::softmax: return "softmax";
        case OpKind::log_softmax: return "log-softmax";
        case OpKind::global_avg_pool: return "global-avg-pool";
        case OpKind::avg_pool: return "avg-pool";
        case OpKind::elementwise_mul: return "elementwise-mul";
        case OpKind::elementwise_add: return "elementwise-add";
        case OpKind::concat: return "concat";
        case OpKind::l1_distance: return "l1-distance";
        case OpKind::l2_distance: return "l2-distance";
        case OpKind::cosine_similarity: return "cosine-similarity";
        case OpKind::mean: return "mean";
        case OpKind::sum: return "sum";
        case OpKind::affine: return "affine";
        case OpKind::reshape: return "reshape";
        case OpKind::l2_normalize: return "l2-normalize";
    }
    return "?";
}

// One node of the dynamic tape. Forward values are computed eagerly by the
// op constructors in ops.hpp; backward_fn accumulates into the inputs' grad
// buffers. The graph for a step is whatever hangs off the loss node and is
// released when the last TensorPtr goes out of scope.
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    OpKind kind = OpKind::leaf;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void()> backward_fn;

    std::int64_t size() const { return static_cast<std::int64_t>(value.size()); }

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
    void zero_grad() { grad.assign(value.size(), 0.0); }
};

using TensorPtr = std::shared_ptr<Node>;

inline TensorPtr make_tensor(Shape shape, std::vector<double> value, bool requires_grad = false) {
    if (numel(shape) != static_cast<std::int64_t>(value.size()))
        throw std::invalid_argument("make_tensor: shape " + shape_str(shape) + " does not match " +
                                    std::to_string(value.size()) + " values");
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    if (requires_grad) n->ensure_grad();
    return n;
}

inline TensorPtr make_zeros(const Shape& shape, bool requires_grad = false) {
    return make_tensor(shape, std::vector<double>(static_cast<std::size_t>(numel(shape)), 0.0), requires_grad);
}

inline TensorPtr make_full(const Shape& shape, double v, bool requires_grad = false) {
    return make_tensor(shape, std::vector<double>(static_cast<std::size_t>(numel(shape)), v), requires_grad);
}

// Kaiming-style uniform init, bound = sqrt(6 / fan_in)
inline TensorPtr make_param(const Shape& shape, Rng& rng, double fan_in, double gain = 1.0) {
    std::vector<double> v(static_cast<std::size_t>(numel(shape)));
    double bound = gain * std::sqrt(6.0 / (fan_in > 0 ? fan_in : 1.0));
    for (auto& x : v) x = rng.uniform(-bound, bound);
    return make_tensor(shape, std::move(v), true);
}

// Constant copy that blocks gradient flow.
inline TensorPtr detach(const TensorPtr& t) {
    return make_tensor(t->shape, t->value, false);
}

inline TensorPtr interior(Shape shape, const std::vector<TensorPtr>& inputs, OpKind kind) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value.assign(static_cast<std::size_t>(numel(n->shape)), 0.0);
    n->kind = kind;
    n->inputs = inputs;
    for (auto& in : inputs)
        if (in->requires_grad) n->requires_grad = true;
    return n;
}

// Reverse-mode sweep from a scalar output. Topological order via iterative
// DFS; each node is visited exactly once.
inline void backward(const TensorPtr& out) {
    if (out->size() != 1)
        throw std::invalid_argument("backward: output must be a scalar, got shape " + shape_str(out->shape));
    if (!out->requires_grad) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(out.get(), 0);
    seen.insert(out.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && !seen.count(child)) {
                seen.insert(child);
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (Node* n : order) n->ensure_grad();
    out->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn();
    }
}

inline void zero_grads(const std::vector<TensorPtr>& params) {
    for (auto& p : params) p->zero_grad();
}

// FNV-1a over the raw value bytes; used for frozen-parameter checks.
inline std::uint64_t value_checksum(const std::vector<TensorPtr>& params) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& p : params) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
        for (std::size_t i = 0; i < p->value.size() * sizeof(double); ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ull;
        }
    }
    return h;
}

} // namespace auregress
