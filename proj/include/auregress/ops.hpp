#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "auregress/tensor.hpp"

namespace auregress {

namespace detail {

struct ConvDims {
    std::int64_t N, Ci, H, W, Co, kh, kw, stride, pad, Ho, Wo;
};

// positions o in [0,out) whose input index i = o*stride + k - pad lands in [0,in)
inline void valid_range(std::int64_t k, std::int64_t pad, std::int64_t stride, std::int64_t in_extent,
                        std::int64_t out_extent, std::int64_t& lo, std::int64_t& hi) {
    std::int64_t shift = pad - k;
    lo = shift > 0 ? (shift + stride - 1) / stride : 0;
    std::int64_t top = in_extent - 1 + pad - k;
    hi = top < 0 ? 0 : std::min(out_extent, top / stride + 1);
    if (hi < lo) hi = lo;
}

// y[n,co,oy,ox] += sum_{ci,ky,kx} x[n,ci,oy*s+ky-p,ox*s+kx-p] * w[co,ci,ky,kx]
inline void conv_fwd_kernel(const double* x, const double* w, double* y, const ConvDims& d) {
    for (std::int64_t n = 0; n < d.N; ++n)
        for (std::int64_t co = 0; co < d.Co; ++co) {
            double* yc = y + ((n * d.Co + co) * d.Ho) * d.Wo;
            for (std::int64_t ci = 0; ci < d.Ci; ++ci) {
                const double* xc = x + ((n * d.Ci + ci) * d.H) * d.W;
                const double* wc = w + ((co * d.Ci + ci) * d.kh) * d.kw;
                for (std::int64_t ky = 0; ky < d.kh; ++ky) {
                    std::int64_t oy_lo, oy_hi;
                    valid_range(ky, d.pad, d.stride, d.H, d.Ho, oy_lo, oy_hi);
                    for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                        const double wv = wc[ky * d.kw + kx];
                        std::int64_t ox_lo, ox_hi;
                        valid_range(kx, d.pad, d.stride, d.W, d.Wo, ox_lo, ox_hi);
                        for (std::int64_t oy = oy_lo; oy < oy_hi; ++oy) {
                            const std::int64_t iy = oy * d.stride + ky - d.pad;
                            double* yrow = yc + oy * d.Wo;
                            const double* xrow = xc + iy * d.W + (kx - d.pad);
                            if (d.stride == 1) {
                                for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox) yrow[ox] += wv * xrow[ox];
                            } else {
                                for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox)
                                    yrow[ox] += wv * xrow[ox * d.stride];
                            }
                        }
                    }
                }
            }
        }
}

// dx[n,ci,oy*s+ky-p,ox*s+kx-p] += sum_co dy[n,co,oy,ox] * w[co,ci,ky,kx]
inline void conv_bwd_data_kernel(const double* dy, const double* w, double* dx, const ConvDims& d) {
    for (std::int64_t n = 0; n < d.N; ++n)
        for (std::int64_t ci = 0; ci < d.Ci; ++ci) {
            double* xc = dx + ((n * d.Ci + ci) * d.H) * d.W;
            for (std::int64_t co = 0; co < d.Co; ++co) {
                const double* yc = dy + ((n * d.Co + co) * d.Ho) * d.Wo;
                const double* wc = w + ((co * d.Ci + ci) * d.kh) * d.kw;
                for (std::int64_t ky = 0; ky < d.kh; ++ky) {
                    std::int64_t oy_lo, oy_hi;
                    valid_range(ky, d.pad, d.stride, d.H, d.Ho, oy_lo, oy_hi);
                    for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                        const double wv = wc[ky * d.kw + kx];
                        std::int64_t ox_lo, ox_hi;
                        valid_range(kx, d.pad, d.stride, d.W, d.Wo, ox_lo, ox_hi);
                        for (std::int64_t oy = oy_lo; oy < oy_hi; ++oy) {
                            const std::int64_t iy = oy * d.stride + ky - d.pad;
                            const double* yrow = yc + oy * d.Wo;
                            double* xrow = xc + iy * d.W + (kx - d.pad);
                            if (d.stride == 1) {
                                for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox) xrow[ox] += wv * yrow[ox];
                            } else {
                                for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox)
                                    xrow[ox * d.stride] += wv * yrow[ox];
                            }
                        }
                    }
                }
            }
        }
}

// dw[co,ci,ky,kx] += sum_{n,oy,ox} dy[n,co,oy,ox] * x[n,ci,oy*s+ky-p,ox*s+kx-p]
inline void conv_bwd_weight_kernel(const double* x, const double* dy, double* dw, const ConvDims& d) {
    for (std::int64_t n = 0; n < d.N; ++n)
        for (std::int64_t co = 0; co < d.Co; ++co) {
            const double* yc = dy + ((n * d.Co + co) * d.Ho) * d.Wo;
            for (std::int64_t ci = 0; ci < d.Ci; ++ci) {
                const double* xc = x + ((n * d.Ci + ci) * d.H) * d.W;
                double* wc = dw + ((co * d.Ci + ci) * d.kh) * d.kw;
                for (std::int64_t ky = 0; ky < d.kh; ++ky) {
                    std::int64_t oy_lo, oy_hi;
                    valid_range(ky, d.pad, d.stride, d.H, d.Ho, oy_lo, oy_hi);
                    for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                        std::int64_t ox_lo, ox_hi;
                        valid_range(kx, d.pad, d.stride, d.W, d.Wo, ox_lo, ox_hi);
                        double acc = 0.0;
                        for (std::int64_t oy = oy_lo; oy < oy_hi; ++oy) {
                            const std::int64_t iy = oy * d.stride + ky - d.pad;
                            const double* yrow = yc + oy * d.Wo;
                            const double* xrow = xc + iy * d.W + (kx - d.pad);
                            if (d.stride == 1) {
                                for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox) acc += yrow[ox] * xrow[ox];
                            } else {
                                for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox)
                                    acc += yrow[ox] * xrow[ox * d.stride];
                            }
                        }
                        wc[ky * d.kw + kx] += acc;
                    }
                }
            }
        }
}

inline std::array<std::int64_t, 4> pad4(const Shape& s) {
    std::array<std::int64_t, 4> r{1, 1, 1, 1};
    for (std::size_t i = 0; i < s.size(); ++i) r[4 - s.size() + i] = s[i];
    return r;
}

inline std::array<std::int64_t, 4> strides4(const std::array<std::int64_t, 4>& dims,
                                            const std::array<std::int64_t, 4>& out) {
    std::array<std::int64_t, 4> st{};
    std::int64_t acc = 1;
    for (int i = 3; i >= 0; --i) {
        st[i] = dims[i] == 1 && out[i] != 1 ? 0 : acc;
        acc *= dims[i];
    }
    return st;
}

[[noreturn]] inline void shape_error(OpKind k, const std::string& detail) {
    throw std::invalid_argument(std::string(op_name(k)) + ": " + detail);
}

inline void require(bool ok, OpKind k, const std::string& detail) {
    if (!ok) shape_error(k, detail);
}

} // namespace detail

// ---------------------------------------------------------------------------
// convolution

inline TensorPtr conv2d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b, std::int64_t stride,
                        std::int64_t pad) {
    using namespace detail;
    require(x->shape.size() == 4, OpKind::conv2d, "input must be 4-d, got " + shape_str(x->shape));
    require(w->shape.size() == 4, OpKind::conv2d, "weight must be 4-d, got " + shape_str(w->shape));
    const auto N = x->shape[0], Ci = x->shape[1], H = x->shape[2], W = x->shape[3];
    const auto Co = w->shape[0], kh = w->shape[2], kw = w->shape[3];
    require(w->shape[1] == Ci, OpKind::conv2d,
            "channel mismatch: input " + shape_str(x->shape) + " vs weight " + shape_str(w->shape));
    require((H + 2 * pad - kh) >= 0 && (H + 2 * pad - kh) % stride == 0 && (W + 2 * pad - kw) % stride == 0,
            OpKind::conv2d, "extent " + shape_str(x->shape) + " not divisible for k=" + std::to_string(kh) +
                                " s=" + std::to_string(stride) + " p=" + std::to_string(pad));
    if (b) require(b->shape == Shape{Co}, OpKind::conv2d, "bias must be [" + std::to_string(Co) + "]");
    const ConvDims d{N, Ci, H, W, Co, kh, kw, stride, pad, (H + 2 * pad - kh) / stride + 1,
                     (W + 2 * pad - kw) / stride + 1};

    std::vector<TensorPtr> ins{x, w};
    if (b) ins.push_back(b);
    auto out = interior({N, Co, d.Ho, d.Wo}, ins, OpKind::conv2d);
    if (b) {
        double* y = out->value.data();
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t co = 0; co < Co; ++co) {
                const double bv = b->value[co];
                double* yc = y + ((n * Co + co) * d.Ho) * d.Wo;
                for (std::int64_t i = 0; i < d.Ho * d.Wo; ++i) yc[i] = bv;
            }
    }
    conv_fwd_kernel(x->value.data(), w->value.data(), out->value.data(), d);

    Node* self = out.get();
    Node* xn = x.get();
    Node* wn = w.get();
    Node* bn = b ? b.get() : nullptr;
    out->backward_fn = [self, xn, wn, bn, d]() {
        if (xn->requires_grad) conv_bwd_data_kernel(self->grad.data(), wn->value.data(), xn->grad.data(), d);
        if (wn->requires_grad) conv_bwd_weight_kernel(xn->value.data(), self->grad.data(), wn->grad.data(), d);
        if (bn && bn->requires_grad) {
            for (std::int64_t n = 0; n < d.N; ++n)
                for (std::int64_t co = 0; co < d.Co; ++co) {
                    const double* gc = self->grad.data() + ((n * d.Co + co) * d.Ho) * d.Wo;
                    double acc = 0.0;
                    for (std::int64_t i = 0; i < d.Ho * d.Wo; ++i) acc += gc[i];
                    bn->grad[co] += acc;
                }
        }
    };
    return out;
}

// weight layout [Ci, Co, kh, kw]; out extent = (in-1)*stride - 2*pad + k
inline TensorPtr conv_transpose2d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b,
                                  std::int64_t stride, std::int64_t pad) {
    using namespace detail;
    require(x->shape.size() == 4, OpKind::conv_transpose2d, "input must be 4-d, got " + shape_str(x->shape));
    require(w->shape.size() == 4, OpKind::conv_transpose2d, "weight must be 4-d, got " + shape_str(w->shape));
    const auto N = x->shape[0], Ci = x->shape[1], H = x->shape[2], W = x->shape[3];
    const auto Co = w->shape[1], kh = w->shape[2], kw = w->shape[3];
    require(w->shape[0] == Ci, OpKind::conv_transpose2d,
            "channel mismatch: input " + shape_str(x->shape) + " vs weight " + shape_str(w->shape));
    const auto Ho = (H - 1) * stride - 2 * pad + kh;
    const auto Wo = (W - 1) * stride - 2 * pad + kw;
    require(Ho > 0 && Wo > 0, OpKind::conv_transpose2d, "empty output for input " + shape_str(x->shape));
    if (b)
        require(b->shape == Shape{Co}, OpKind::conv_transpose2d, "bias must be [" + std::to_string(Co) + "]");
    // conv-role dims: the transposed conv is the data-adjoint of a conv whose
    // input is our output
    const ConvDims d{N, Co, Ho, Wo, Ci, kh, kw, stride, pad, H, W};

    std::vector<TensorPtr> ins{x, w};
    if (b) ins.push_back(b);
    auto out = interior({N, Co, Ho, Wo}, ins, OpKind::conv_transpose2d);
    conv_bwd_data_kernel(x->value.data(), w->value.data(), out->value.data(), d);
    if (b) {
        double* y = out->value.data();
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t co = 0; co < Co; ++co) {
                const double bv = b->value[co];
                double* yc = y + ((n * Co + co) * Ho) * Wo;
                for (std::int64_t i = 0; i < Ho * Wo; ++i) yc[i] += bv;
            }
    }

    Node* self = out.get();
    Node* xn = x.get();
    Node* wn = w.get();
    Node* bn = b ? b.get() : nullptr;
    out->backward_fn = [self, xn, wn, bn, d]() {
        if (xn->requires_grad) conv_fwd_kernel(self->grad.data(), wn->value.data(), xn->grad.data(), d);
        if (wn->requires_grad) conv_bwd_weight_kernel(self->grad.data(), xn->value.data(), wn->grad.data(), d);
        if (bn && bn->requires_grad) {
            const auto Co2 = self->shape[1], M = self->shape[2] * self->shape[3];
            for (std::int64_t n = 0; n < self->shape[0]; ++n)
                for (std::int64_t co = 0; co < Co2; ++co) {
                    const double* gc = self->grad.data() + ((n * Co2 + co) * M);
                    double acc = 0.0;
                    for (std::int64_t i = 0; i < M; ++i) acc += gc[i];
                    bn->grad[co] += acc;
                }
        }
    };
    return out;
}

// ---------------------------------------------------------------------------
// dense

inline TensorPtr fully_connected(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b) {
    using namespace detail;
    require(x->shape.size() == 2, OpKind::fully_connected, "input must be 2-d, got " + shape_str(x->shape));
    require(w->shape.size() == 2, OpKind::fully_connected, "weight must be 2-d, got " + shape_str(w->shape));
    const auto N = x->shape[0], Din = x->shape[1], Dout = w->shape[0];
    require(w->shape[1] == Din, OpKind::fully_connected,
            "dim mismatch: input " + shape_str(x->shape) + " vs weight " + shape_str(w->shape));
    if (b) require(b->shape == Shape{Dout}, OpKind::fully_connected, "bias must be [" + std::to_string(Dout) + "]");

    std::vector<TensorPtr> ins{x, w};
    if (b) ins.push_back(b);
    auto out = interior({N, Dout}, ins, OpKind::fully_connected);
    for (std::int64_t n = 0; n < N; ++n) {
        const double* xr = x->value.data() + n * Din;
        double* yr = out->value.data() + n * Dout;
        for (std::int64_t o = 0; o < Dout; ++o) {
            const double* wr = w->value.data() + o * Din;
            double acc = b ? b->value[o] : 0.0;
            for (std::int64_t i = 0; i < Din; ++i) acc += wr[i] * xr[i];
            yr[o] = acc;
        }
    }

    Node* self = out.get();
    Node* xn = x.get();
    Node* wn = w.get();
    Node* bn = b ? b.get() : nullptr;
    out->backward_fn = [self, xn, wn, bn, N, Din, Dout]() {
        for (std::int64_t n = 0; n < N; ++n) {
            const double* gy = self->grad.data() + n * Dout;
            if (xn->requires_grad) {
                double* gx = xn->grad.data() + n * Din;
                for (std::int64_t o = 0; o < Dout; ++o) {
                    const double g = gy[o];
                    const double* wr = wn->value.data() + o * Din;
                    for (std::int64_t i = 0; i < Din; ++i) gx[i] += g * wr[i];
                }
            }
            if (wn->requires_grad) {
                const double* xr = xn->value.data() + n * Din;
                for (std::int64_t o = 0; o < Dout; ++o) {
                    const double g = gy[o];
                    double* gw = wn->grad.data() + o * Din;
                    for (std::int64_t i = 0; i < Din; ++i) gw[i] += g * xr[i];
                }
            }
            if (bn && bn->requires_grad)
                for (std::int64_t o = 0; o < Dout; ++o) bn->grad[o] += gy[o];
        }
    };
    return out;
}

// ---------------------------------------------------------------------------
// normalization

inline TensorPtr instance_norm(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                               double eps = 1e-5) {
    using namespace detail;
    require(x->shape.size() == 4, OpKind::instance_norm, "input must be 4-d, got " + shape_str(x->shape));
    const auto N = x->shape[0], C = x->shape[1], M = x->shape[2] * x->shape[3];
    require(gamma->shape == Shape{C} && beta->shape == Shape{C}, OpKind::instance_norm,
            "gamma/beta must be [" + std::to_string(C) + "]");

    auto out = interior(x->shape, {x, gamma, beta}, OpKind::instance_norm);
    auto stats = std::make_shared<std::vector<double>>(static_cast<std::size_t>(N * C * 2));
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < C; ++c) {
            const double* xr = x->value.data() + (n * C + c) * M;
            double* yr = out->value.data() + (n * C + c) * M;
            double mu = 0.0;
            for (std::int64_t i = 0; i < M; ++i) mu += xr[i];
            mu /= static_cast<double>(M);
            double var = 0.0;
            for (std::int64_t i = 0; i < M; ++i) var += (xr[i] - mu) * (xr[i] - mu);
            var /= static_cast<double>(M);
            const double inv = 1.0 / std::sqrt(var + eps);
            (*stats)[(n * C + c) * 2] = mu;
            (*stats)[(n * C + c) * 2 + 1] = inv;
            const double g = gamma->value[c], bv = beta->value[c];
            for (std::int64_t i = 0; i < M; ++i) yr[i] = g * (xr[i] - mu) * inv + bv;
        }

    Node* self = out.get();
    Node* xn = x.get();
    Node* gn = gamma.get();
    Node* bn = beta.get();
    out->backward_fn = [self, xn, gn, bn, stats, N, C, M]() {
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t c = 0; c < C; ++c) {
                const double mu = (*stats)[(n * C + c) * 2];
                const double inv = (*stats)[(n * C + c) * 2 + 1];
                const double* xr = xn->value.data() + (n * C + c) * M;
                const double* gy = self->grad.data() + (n * C + c) * M;
                double sum_gy = 0.0, sum_gy_xh = 0.0;
                for (std::int64_t i = 0; i < M; ++i) {
                    sum_gy += gy[i];
                    sum_gy_xh += gy[i] * (xr[i] - mu) * inv;
                }
                if (gn->requires_grad) gn->grad[c] += sum_gy_xh;
                if (bn->requires_grad) bn->grad[c] += sum_gy;
                if (xn->requires_grad) {
                    double* gx = xn->grad.data() + (n * C + c) * M;
                    const double g = gn->value[c];
                    const double m1 = sum_gy / static_cast<double>(M);
                    const double m2 = sum_gy_xh / static_cast<double>(M);
                    for (std::int64_t i = 0; i < M; ++i) {
                        const double xh = (xr[i] - mu) * inv;
                        gx[i] += g * inv * (gy[i] - m1 - xh * m2);
                    }
                }
            }
    };
    return out;
}

// Running statistics for batch-norm; owned by the layer, not the tape.
struct BatchNormStats {
    std::vector<double> mean, var;
    bool initialized = false;
};

inline TensorPtr batch_norm(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                            BatchNormStats* stats, bool training, double momentum = 0.1,
                            double eps = 1e-5) {
    using namespace detail;
    require(x->shape.size() == 4 || x->shape.size() == 2, OpKind::batch_norm,
            "input must be 2-d or 4-d, got " + shape_str(x->shape));
    const bool spatial = x->shape.size() == 4;
    const auto N = x->shape[0];
    const auto C = spatial ? x->shape[1] : x->shape[1];
    const auto M = spatial ? x->shape[2] * x->shape[3] : 1; // per-sample group size
    const auto G = N * M;                                   // reduction group per channel
    require(gamma->shape == Shape{C} && beta->shape == Shape{C}, OpKind::batch_norm,
            "gamma/beta must be [" + std::to_string(C) + "]");
    require(training || (stats && stats->initialized), OpKind::batch_norm,
            "eval mode requires populated running statistics");

    auto out = interior(x->shape, {x, gamma, beta}, OpKind::batch_norm);
    auto mu_inv = std::make_shared<std::vector<double>>(static_cast<std::size_t>(C * 2));
    auto at = [&](const double* base, std::int64_t n, std::int64_t c, std::int64_t i) {
        return spatial ? base[(n * C + c) * M + i] : base[n * C + c];
    };
    for (std::int64_t c = 0; c < C; ++c) {
        double mu, var;
        if (training) {
            mu = 0.0;
            for (std::int64_t n = 0; n < N; ++n)
                for (std::int64_t i = 0; i < M; ++i) mu += at(x->value.data(), n, c, i);
            mu /= static_cast<double>(G);
            var = 0.0;
            for (std::int64_t n = 0; n < N; ++n)
                for (std::int64_t i = 0; i < M; ++i) {
                    const double dv = at(x->value.data(), n, c, i) - mu;
                    var += dv * dv;
                }
            var /= static_cast<double>(G);
        } else {
            mu = stats->mean[c];
            var = stats->var[c];
        }
        const double inv = 1.0 / std::sqrt(var + eps);
        (*mu_inv)[c * 2] = mu;
        (*mu_inv)[c * 2 + 1] = inv;
        const double g = gamma->value[c], bv = beta->value[c];
        for (std::int64_t n = 0; n < N; ++n) {
            const double* xr = x->value.data();
            double* yr = out->value.data();
            if (spatial) {
                const double* xs = xr + (n * C + c) * M;
                double* ys = yr + (n * C + c) * M;
                for (std::int64_t i = 0; i < M; ++i) ys[i] = g * (xs[i] - mu) * inv + bv;
            } else {
                yr[n * C + c] = g * (xr[n * C + c] - mu) * inv + bv;
            }
        }
        if (training && stats) {
            if (!stats->initialized) {
                stats->mean.assign(static_cast<std::size_t>(C), 0.0);
                stats->var.assign(static_cast<std::size_t>(C), 1.0);
            }
            stats->mean[c] = (1.0 - momentum) * stats->mean[c] + momentum * mu;
            stats->var[c] = (1.0 - momentum) * stats->var[c] + momentum * var;
        }
    }
    if (training && stats) stats->initialized = true;

    Node* self = out.get();
    Node* xn = x.get();
    Node* gn = gamma.get();
    Node* bn = beta.get();
    out->backward_fn = [self, xn, gn, bn, mu_inv, N, C, M, spatial, training]() {
        const auto G = N * M;
        for (std::int64_t c = 0; c < C; ++c) {
            const double mu = (*mu_inv)[c * 2], inv = (*mu_inv)[c * 2 + 1];
            double sum_gy = 0.0, sum_gy_xh = 0.0;
            for (std::int64_t n = 0; n < N; ++n)
                for (std::int64_t i = 0; i < M; ++i) {
                    const std::int64_t idx = spatial ? (n * C + c) * M + i : n * C + c;
                    const double gy = self->grad[idx];
                    sum_gy += gy;
                    sum_gy_xh += gy * (xn->value[idx] - mu) * inv;
                }
            if (gn->requires_grad) gn->grad[c] += sum_gy_xh;
            if (bn->requires_grad) bn->grad[c] += sum_gy;
            if (xn->requires_grad) {
                const double g = gn->value[c];
                const double m1 = sum_gy / static_cast<double>(G);
                const double m2 = sum_gy_xh / static_cast<double>(G);
                for (std::int64_t n = 0; n < N; ++n)
                    for (std::int64_t i = 0; i < M; ++i) {
                        const std::int64_t idx = spatial ? (n * C + c) * M + i : n * C + c;
                        const double xh = (xn->value[idx] - mu) * inv;
                        if (training)
                            xn->grad[idx] += g * inv * (self->grad[idx] - m1 - xh * m2);
                        else
                            xn->grad[idx] += g * inv * self->grad[idx];
                    }
            }
        }
    };
    return out;
}

// ---------------------------------------------------------------------------
// pointwise activations

inline TensorPtr relu(const TensorPtr& x) {
    auto out = interior(x->shape, {x}, OpKind::relu);
    for (std::size_t i = 0; i < x->value.size(); ++i) out->value[i] = x->value[i] > 0.0 ? x->value[i] : 0.0;
    Node* self = out.get();
    Node* xn = x.get();
    out->backward_fn = [self, xn]() {
        if (!xn->requires_grad) return;
        for (std::size_t i = 0; i < xn->value.size(); ++i)
            if (xn->value[i] > 0.0) xn->grad[i] += self->grad[i];
    };
    return out;
}

inline TensorPtr sigmoid(const TensorPtr& x) {
    auto out = interior(x->shape, {x}, OpKind::sigmoid);
    for (std::size_t i = 0; i < x->value.size(); ++i) {
        const double v = x->value[i];
        out->value[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    Node* self = out.get();
    Node* xn = x.get();
    out->backward_fn = [self, xn]() {
        if (!xn->requires_grad) return;
        for (std::size_t i = 0; i < xn->value.size(); ++i) {
            const double s = self->value[i];
            xn->grad[i] += self->grad[i] * s * (1.0 - s);
        }
    };
    return out;
}

inline TensorPtr tanh(const TensorPtr& x) {
    auto out = interior(x->shape, {x}, OpKind::tanh);
    for (std::size_t i = 0; i < x->value.size(); ++i) out->value[i] = std::tanh(x->value[i]);
    Node* self = out.get();
    Node* xn = x.get();
    out->backward_fn = [self, xn]() {
        if (!xn->requires_grad) return;
        for (std::size_t i = 0; i < xn->value.size(); ++i) {
            const double t = self->value[i];
            xn->grad[i] += self->grad[i] * (1.0 - t * t);
        }
    };
    return out;
}

// ---------------------------------------------------------------------------
// softmax family (log-sum-exp stabilized)

namespace detail {
inline void slice_layout(const Shape& s, std::int64_t axis, std::int64_t& outer, std::int64_t& K,
                         std::int64_t& inner) {
    outer = 1;
    inner = 1;
    for (std::int64_t i = 0; i < axis; ++i) outer *= s[i];
    K = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}
} // namespace detail

inline TensorPtr softmax(const TensorPtr& x, std::int64_t axis) {
    using namespace detail;
    require(axis >= 0 && axis < static_cast<std::int64_t>(x->shape.size()), OpKind::softmax,
            "axis " + std::to_string(axis) + " out of range for " + shape_str(x->shape));
    std::int64_t outer, K, inner;
    slice_layout(x->shape, axis, outer, K, inner);
    auto out = interior(x->shape, {x}, OpKind::softmax);
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t i = 0; i < inner; ++i) {
            double m = -1e300;
            for (std::int64_t k = 0; k < K; ++k) m = std::max(m, x->value[(o * K + k) * inner + i]);
            double z = 0.0;
            for (std::int64_t k = 0; k < K; ++k) {
                const double e = std::exp(x->value[(o * K + k) * inner + i] - m);
                out->value[(o * K + k) * inner + i] = e;
                z += e;
            }
            for (std::int64_t k = 0; k < K; ++k) out->value[(o * K + k) * inner + i] /= z;
        }
    Node* self = out.get();
    Node* xn = x.get();
    out->backward_fn = [self, xn, outer, K, inner]() {
        if (!xn->requires_grad) return;
        for (std::int64_t o = 0; o < outer; ++o)
            for (std::int64_t i = 0; i < inner; ++i) {
                double dot = 0.0;
                for (std::int64_t k = 0; k < K; ++k) {
                    const std::int64_t idx = (o * K + k) * inner + i;
                    dot += self->grad[idx] * self->value[idx];
                }
                for (std::int64_t k = 0; k < K; ++k) {
                    const std::int64_t idx = (o * K + k) * inner + i;
                    xn->grad[idx] += self->value[idx] * (self->grad[idx] - dot);
                }
            }
    };
    return out;
}

inline TensorPtr log_softmax(const TensorPtr& x, std::int64_t axis) {
    using namespace detail;
    require(axis >= 0 && axis < static_cast<std::int64_t>(x->shape.size()), OpKind::log_softmax,
            "axis " + std::to_string(axis) + " out of range for " + shape_str(x->shape));
    std::int64_t outer, K, inner;
    slice_layout(x->shape, axis, outer, K, inner);
    auto out = interior(x->shape, {x}, OpKind::log_softmax);
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t i = 0; i < inner; ++i) {
            double m = -1e300;
            for (std::int64_t k = 0; k < K; ++k) m = std::max(m, x->value[(o * K + k) * inner + i]);
            double z = 0.0;
            for (std::int64_t k = 0; k < K; ++k) z += std::exp(x->value[(o * K + k) * inner + i] - m);
            const double lse = m + std::log(z);
            for (std::int64_t k = 0; k < K; ++k) {
                const std::int64_t idx = (o * K + k) * inner + i;
                out->value[idx] = x->value[idx] - lse;
            }
        }
    Node* self = out.get();
    Node* xn = x.get();
    out->backward_fn = [self, xn, outer, K, inner]() {
        if (!xn->requires_grad) return;
        for (std::int64_t o = 0; o < outer; ++o)
            for (std::int64_t i = 0; i < inner; ++i) {
                double sum = 0.0;
                for (std::int64_t k = 0; k < K; ++k) sum += self->grad[(o * K + k) * inner + i];
                for (std::int64_t k = 0; k < K; ++k) {
                    const std::int64_t idx = (o * K + k) * inner + i;
                    xn->grad[idx] += self->grad[idx] - std::exp(self->value[idx]) * sum;
                }
            }
    };
    return out;
}

// ---------------------------------------------------------------------------
// pooling

// adaptive average pooling; [N,C,H,W] -> [N,C,oh,ow]
inline TensorPtr avg_pool(const TensorPtr& x, std::int64_t oh, std::int64_t ow) {
    using namespace detail;
    require(x->shape.size() == 4, OpKind::avg_pool, "input must be 4-d, got " + shape_str(x->shape));
    require(oh > 0 && ow > 0, OpKind::avg_pool, "output extents must be positive");
    const auto N = x->shape[0], C = x->shape[1], H = x->shape[2], W = x->shape[3];
    auto out = interior({N, C, oh, ow}, {x}, OpKind::avg_pool);
    auto win = [](std::int64_t o, std::int64_t out_e, std::int64_t in_e, std::int64_t& s, std::int64_t& e) {
        s = (o * in_e) / out_e;
        e = ((o + 1) * in_e + out_e - 1) / out_e;
        if (e <= s) e = s + 1;
    };
    for (std::int64_t nc = 0; nc < N * C; ++nc) {
        const double* xs = x->value.data() + nc * H * W;
        double* ys = out->value.data() + nc * oh * ow;
        for (std::int64_t oy = 0; oy < oh; ++oy) {
            std::int64_t y0, y1;
            win(oy, oh, H, y0, y1);
            for (std::int64_t ox = 0; ox < ow; ++ox) {
                std::int64_t x0, x1;
                win(ox, ow, W, x0, x1);
                double acc = 0.0;
                for (std::int64_t iy = y0; iy < y1; ++iy)
                    for (std::int64_t ix = x0; ix < x1; ++ix) acc += xs[iy * W + ix];
                ys[oy * ow + ox] = acc / static_cast<double>((y1 - y0) * (x1 - x0));
            }
        }
    }
    Node* self = out.get();
    Node* xn = x.get();
    out->backward_fn = [self, xn, N, C, H, W, oh, ow, win]() {
        if (!xn->requires_grad) return;
        for (std::int64_t nc = 0; nc < N * C; ++nc) {
            double* gx = xn->grad.data() + nc * H * W;
            const double* gy = self->grad.data() + nc * oh * ow;
            for (std::int64_t oy = 0; oy < oh; ++oy) {
                std::int64_t y0, y1;
                win(oy, oh, H, y0, y1);
                for (std::int64_t ox = 0; ox < ow; ++ox) {
                    std::int64_t x0, x1;
                    win(ox, ow, W, x0, x1);
                    const double g = gy[oy * ow + ox] / static_cast<double>((y1 - y0) * (x1 - x0));
                    for (std::int64_t iy = y0; iy < y1; ++iy)
                        for (std::int64_t ix = x0; ix < x1; ++ix) gx[iy * W + ix] += g;
                }
            }
        }
    };
    return out;
}

// [N,C,H,W] -> [N,C]
inline TensorPtr global_avg_pool(const TensorPtr& x) {
    using namespace detail;
    require(x->shape.size() == 4, OpKind::global_avg_pool, "input must be 4-d, got " + shape_str(x->shape));
    const auto N = x->shape[0], C = x->shape[1], M = x->shape[2] * x->shape[3];
    auto out = interior({N, C}, {x}, OpKind::global_avg_pool);
    for (std::int64_t nc = 0; nc < N * C; ++nc) {
        const double* xs = x->value.data() + nc * M;
        double acc = 0.0;
        for (std::int64_t i = 0; i < M; ++i) acc += xs[i];
        out->value[nc] = acc / static_cast<double>(M);
    }
    Node* self = out.get();
    Node* xn = x.get();
    out->backward_fn = [self, xn, N, C, M]() {
        if (!xn->requires_grad) return;
        for (std::int64_t nc = 0; nc < N * C; ++nc) {
            const double g = self->grad[nc] / static_cast<double>(M);
            double* gx = xn->grad.data() + nc * M;
            for (std::int64_t i = 0; i < M; ++i) gx[i] += g;
        }
    };
    return out;
}

// ---------------------------------------------------------------------------
// elementwise with numpy-style broadcasting (rank <= 4, equal rank)

namespace detail {
inline Shape broadcast_shape(OpKind k, const Shape& a, const Shape& b) {
    require(a.size() == b.size() && a.size() <= 4, k,
            "operands must share rank <= 4, got " + shape_str(a) + " and " + shape_str(b));
    Shape out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        require(a[i] == b[i] || a[i] == 1 || b[i] == 1, k,
                "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        out[i] = std::max(a[i], b[i]);
    }
    return out;
}

template <class F>
inline void broadcast_iter(const Shape& out_shape, const Shape& a_shape, const Shape& b_shape, F&& f) {
    const auto od = pad4(out_shape);
    const auto ad = pad4(a_shape);
    const auto bd = pad4(b_shape);
    const auto as = strides4(ad, od);
    const auto bs = strides4(bd, od);
    std::int64_t oi = 0;
    for (std::int64_t i0 = 0; i0 < od[0]; ++i0)
        for (std::int64_t i1 = 0; i1 < od[1]; ++i1)
            for (std::int64_t i2 = 0; i2 < od[2]; ++i2) {
                const std::int64_t a_base = i0 * as[0] + i1 * as[1] + i2 * as[2];
                const std::int64_t b_base = i0 * bs[0] + i1 * bs[1] + i2 * bs[2];
                for (std::int64_t i3 = 0; i3 < od[3]; ++i3)
                    f(oi++, a_base + i3 * as[3], b_base + i3 * bs[3]);
            }
}
} // namespace detail

inline TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    using namespace detail;
    Shape os = broadcast_shape(OpKind::elementwise_mul, a->shape, b->shape);
    auto out = interior(os, {a, b}, OpKind::elementwise_mul);
    broadcast_iter(os, a->shape, b->shape, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
        out->value[o] = a->value[ia] * b->value[ib];
    });
    Node* self = out.get();
    Node* an = a.get();
    Node* bn = b.get();
    Shape ash = a->shape, bsh = b->shape;
    out->backward_fn = [self, an, bn, os, ash, bsh]() {
        broadcast_iter(os, ash, bsh, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
            const double g = self->grad[o];
            if (an->requires_grad) an->grad[ia] += g * bn->value[ib];
            if (bn->requires_grad) bn->grad[ib] += g * an->value[ia];
        });
    };
    return out;
}

inline TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    using namespace detail;
    Shape os = broadcast_shape(OpKind::elementwise_add, a->shape, b->shape);
    auto out = interior(os, {a, b}, OpKind::elementwise_add);
    broadcast_iter(os, a->shape, b->shape, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
        out->value[o] = a->value[ia] + b->value[ib];
    });
    Node* self = out.get();
    Node* an = a.get();
    Node* bn = b.get();
    Shape ash = a->shape, bsh = b->shape;
    out->backward_fn = [self, an, bn, os, ash, bsh]() {
        broadcast_iter(os, ash, bsh, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
            const double g = self->grad[o];
            if (an->requires_grad) an->grad[ia] += g;
            if (bn->requires_grad) bn->grad[ib] += g;
        });
    };
    return out;
}

// y = k*x + c
inline TensorPtr affine(const TensorPtr& x, double k, double c) {
    auto out = interior(x->shape, {x}, OpKind::affine);
    for (std::size_t i = 0; i < x->value.size(); ++i) out->value[i] = k * x->value[i] + c;
    Node* self = out.get();
    Node* xn = x.get();
    out->backward_fn = [self, xn, k]() {
        if (!xn->requires_grad) return;
        for (std::size_t i = 0; i < xn->value.size(); ++i) xn->grad[i] += k * self->grad[i];
    };
    return out;
}

inline TensorPtr sub(const TensorPtr& a, const TensorPtr& b) { return add(a, affine(b, -1.0, 0.0)); }

// ---------------------------------------------------------------------------
// concat

inline TensorPtr concat(const std::vector<TensorPtr>& parts, std::int64_t axis) {
    using namespace detail;
    require(!parts.empty(), OpKind::concat, "needs at least one input");
    const Shape& ref = parts[0]->shape;
    require(axis >= 0 && axis < static_cast<std::int64_t>(ref.size()), OpKind::concat,
            "axis " + std::to_string(axis) + " out of range for " + shape_str(ref));
    Shape os = ref;
    std::int64_t total = 0;
    for (const auto& p : parts) {
        require(p->shape.size() == ref.size(), OpKind::concat,
                "rank mismatch: " + shape_str(p->shape) + " vs " + shape_str(ref));
        for (std::size_t i = 0; i < ref.size(); ++i)
            require(static_cast<std::int64_t>(i) == axis || p->shape[i] == ref[i], OpKind::concat,
                    "extent mismatch at dim " + std::to_string(i) + ": " + shape_str(p->shape) + " vs " +
                        shape_str(ref));
        total += p->shape[axis];
    }
    os[axis] = total;
    auto out = interior(os, parts, OpKind::concat);

    std::int64_t outer, Kout, inner;
    slice_layout(os, axis, outer, Kout, inner);
    std::int64_t off = 0;
    std::vector<std::int64_t> offsets;
    for (const auto& p : parts) {
        offsets.push_back(off);
        const std::int64_t Kp = p->shape[axis];
        for (std::int64_t o = 0; o < outer; ++o)
            std::copy_n(p->value.data() + o * Kp * inner, Kp * inner,
                        out->value.data() + (o * Kout + off) * inner);
        off += Kp;
    }

    Node* self = out.get();
    std::vector<Node*> ins;
    for (const auto& p : parts) ins.push_back(p.get());
    out->backward_fn = [self, ins, offsets, outer, Kout, inner]() {
        for (std::size_t pi = 0; pi < ins.size(); ++pi) {
            Node* p = ins[pi];
            if (!p->requires_grad) continue;
            const std::int64_t Kp = p->size() / (outer * inner);
            for (std::int64_t o = 0; o < outer; ++o) {
                const double* gs = self->grad.data() + (o * Kout + offsets[pi]) * inner;
                double* gp = p->grad.data() + o * Kp * inner;
                for (std::int64_t i = 0; i < Kp * inner; ++i) gp[i] += gs[i];
            }
        }
    };
    return out;
}

// ---------------------------------------------------------------------------
// distances and reductions

// mean absolute difference over all elements -> [1]
inline TensorPtr l1_distance(const TensorPtr& a, const TensorPtr& b) {
    using namespace detail;
    require(a->shape == b->shape, OpKind::l1_distance,
            "shape mismatch: " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    auto out = interior({1}, {a, b}, OpKind::l1_distance);
    const std::size_t n = a->value.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += std::abs(a->value[i] - b->value[i]);
    out->value[0] = acc / static_cast<double>(n);
    Node* self = out.get();
    Node* an = a.get();
    Node* bn = b.get();
    out->backward_fn = [self, an, bn, n]() {
        const double g = self->grad[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double d = an->value[i] - bn->value[i];
            const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
            if (an->requires_grad) an->grad[i] += g * s;
            if (bn->requires_grad) bn->grad[i] -= g * s;
        }
    };
    return out;
}

// euclidean norm of the difference; per leading row for rank >= 2 -> [N], else [1]
inline TensorPtr l2_distance(const TensorPtr& a, const TensorPtr& b) {
    using namespace detail;
    require(a->shape == b->shape, OpKind::l2_distance,
            "shape mismatch: " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    const std::int64_t rows = a->shape.size() >= 2 ? a->shape[0] : 1;
    const std::int64_t cols = numel(a->shape) / rows;
    auto out = interior({rows}, {a, b}, OpKind::l2_distance);
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* ar = a->value.data() + r * cols;
        const double* br = b->value.data() + r * cols;
        double acc = 0.0;
        for (std::int64_t i = 0; i < cols; ++i) acc += (ar[i] - br[i]) * (ar[i] - br[i]);
        out->value[r] = std::sqrt(acc);
    }
    Node* self = out.get();
    Node* an = a.get();
    Node* bn = b.get();
    out->backward_fn = [self, an, bn, rows, cols]() {
        for (std::int64_t r = 0; r < rows; ++r) {
            const double nrm = self->value[r];
            if (nrm == 0.0) continue;
            const double g = self->grad[r] / nrm;
            const double* ar = an->value.data() + r * cols;
            const double* br = bn->value.data() + r * cols;
            for (std::int64_t i = 0; i < cols; ++i) {
                const double d = g * (ar[i] - br[i]);
                if (an->requires_grad) an->grad[r * cols + i] += d;
                if (bn->requires_grad) bn->grad[r * cols + i] -= d;
            }
        }
    };
    return out;
}

// cosine similarity; per row for 2-d inputs -> [N], whole tensor otherwise -> [1]
inline TensorPtr cosine_similarity(const TensorPtr& a, const TensorPtr& b) {
    using namespace detail;
    require(a->shape == b->shape, OpKind::cosine_similarity,
            "shape mismatch: " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    const std::int64_t rows = a->shape.size() == 2 ? a->shape[0] : 1;
    const std::int64_t cols = numel(a->shape) / rows;
    auto out = interior({rows}, {a, b}, OpKind::cosine_similarity);
    auto norms = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows * 2));
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* ar = a->value.data() + r * cols;
        const double* br = b->value.data() + r * cols;
        double na = 0.0, nb = 0.0, dot = 0.0;
        for (std::int64_t i = 0; i < cols; ++i) {
            na += ar[i] * ar[i];
            nb += br[i] * br[i];
            dot += ar[i] * br[i];
        }
        na = std::sqrt(na);
        nb = std::sqrt(nb);
        if (na == 0.0 || nb == 0.0)
            throw std::domain_error("cosine-similarity: zero-norm operand");
        (*norms)[r * 2] = na;
        (*norms)[r * 2 + 1] = nb;
        out->value[r] = dot / (na * nb);
    }
    Node* self = out.get();
    Node* an = a.get();
    Node* bn = b.get();
    out->backward_fn = [self, an, bn, norms, rows, cols]() {
        for (std::int64_t r = 0; r < rows; ++r) {
            const double na = (*norms)[r * 2], nb = (*norms)[r * 2 + 1];
            const double c = self->value[r];
            const double g = self->grad[r];
            const double* ar = an->value.data() + r * cols;
            const double* br = bn->value.data() + r * cols;
            for (std::int64_t i = 0; i < cols; ++i) {
                if (an->requires_grad)
                    an->grad[r * cols + i] += g * (br[i] / (na * nb) - c * ar[i] / (na * na));
                if (bn->requires_grad)
                    bn->grad[r * cols + i] += g * (ar[i] / (na * nb) - c * br[i] / (nb * nb));
            }
        }
    };
    return out;
}

inline TensorPtr mean(const TensorPtr& x) {
    auto out = interior({1}, {x}, OpKind::mean);
    double acc = 0.0;
    for (double v : x->value) acc += v;
    out->value[0] = acc / static_cast<double>(x->value.size());
    Node* self = out.get();
    Node* xn = x.get();
    out->backward_fn = [self, xn]() {
        if (!xn->requires_grad) return;
        const double g = self->grad[0] / static_cast<double>(xn->value.size());
        for (auto& gv : xn->grad) gv += g;
    };
    return out;
}

inline TensorPtr sum(const TensorPtr& x) {
    auto out = interior({1}, {x}, OpKind::sum);
    double acc = 0.0;
    for (double v : x->value) acc += v;
    out->value[0] = acc;
    Node* self = out.get();
    Node* xn = x.get();
    out->backward_fn = [self, xn]() {
        if (!xn->requires_grad) return;
        const double g = self->grad[0];
        for (auto& gv : xn->grad) gv += g;
    };
    return out;
}

inline TensorPtr reshape(const TensorPtr& x, Shape shape) {
    using namespace detail;
    require(numel(shape) == numel(x->shape), OpKind::reshape,
            "cannot reshape " + shape_str(x->shape) + " to " + shape_str(shape));
    auto out = interior(std::move(shape), {x}, OpKind::reshape);
    out->value = x->value;
    Node* self = out.get();
    Node* xn = x.get();
    out->backward_fn = [self, xn]() {
        if (!xn->requires_grad) return;
        for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += self->grad[i];
    };
    return out;
}

// unit L2 norm; per row for 2-d inputs
inline TensorPtr l2_normalize(const TensorPtr& x) {
    using namespace detail;
    const std::int64_t rows = x->shape.size() == 2 ? x->shape[0] : 1;
    const std::int64_t cols = numel(x->shape) / rows;
    auto out = interior(x->shape, {x}, OpKind::l2_normalize);
    auto norms = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xr = x->value.data() + r * cols;
        double n2 = 0.0;
        for (std::int64_t i = 0; i < cols; ++i) n2 += xr[i] * xr[i];
        const double nrm = std::sqrt(n2);
        if (nrm == 0.0) throw std::domain_error("l2-normalize: zero-norm input");
        (*norms)[r] = nrm;
        for (std::int64_t i = 0; i < cols; ++i) out->value[r * cols + i] = xr[i] / nrm;
    }
    Node* self = out.get();
    Node* xn = x.get();
    out->backward_fn = [self, xn, norms, rows, cols]() {
        if (!xn->requires_grad) return;
        for (std::int64_t r = 0; r < rows; ++r) {
            const double nrm = (*norms)[r];
            double dot = 0.0;
            for (std::int64_t i = 0; i < cols; ++i)
                dot += self->grad[r * cols + i] * self->value[r * cols + i];
            for (std::int64_t i = 0; i < cols; ++i)
                xn->grad[r * cols + i] += (self->grad[r * cols + i] - self->value[r * cols + i] * dot) / nrm;
        }
    };
    return out;
}

} // namespace auregress
