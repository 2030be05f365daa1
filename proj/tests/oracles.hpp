#pragma once

// Test-side oracles. These deliberately avoid the library's backward pass and
// metric implementations: gradients come from central finite differences over
// forward evaluations only, and ICC comes from a literal two-way ANOVA.

#include <cmath>
#include <functional>
#include <vector>

#include "auregress/tensor.hpp"

namespace oracles {

// Max relative FD error over every coordinate of every input.
inline double fd_max_rel_err(const std::vector<auregress::TensorPtr>& inputs,
                             const std::function<auregress::TensorPtr()>& build, double eps = 1e-3) {
    using namespace auregress;
    for (auto& in : inputs) in->zero_grad();
    auto out = build();
    backward(out);
    double worst = 0.0;
    for (auto& in : inputs) {
        for (std::size_t i = 0; i < in->value.size(); ++i) {
            const double keep = in->value[i];
            in->value[i] = keep + eps;
            const double fp = build()->value[0];
            in->value[i] = keep - eps;
            const double fm = build()->value[0];
            in->value[i] = keep;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double err = std::abs(in->grad[i] - numeric) / std::max(1.0, std::abs(numeric));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

// Shrout-Fleiss ICC(3,1) via explicit two-way ANOVA sums of squares,
// k = 2 raters (pred, gt), no interaction term.
inline double icc31_anova(const std::vector<double>& pred, const std::vector<double>& gt) {
    const std::size_t n = pred.size();
    const double k = 2.0;
    double grand = 0.0;
    for (std::size_t i = 0; i < n; ++i) grand += pred[i] + gt[i];
    grand /= (k * static_cast<double>(n));

    double col_pred = 0.0, col_gt = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        col_pred += pred[i];
        col_gt += gt[i];
    }
    col_pred /= static_cast<double>(n);
    col_gt /= static_cast<double>(n);

    double ss_rows = 0.0, ss_err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double row = (pred[i] + gt[i]) / k;
        ss_rows += k * (row - grand) * (row - grand);
        const double ep = pred[i] - row - col_pred + grand;
        const double eg = gt[i] - row - col_gt + grand;
        ss_err += ep * ep + eg * eg;
    }
    const double bms = ss_rows / (static_cast<double>(n) - 1.0);
    const double ems = ss_err / ((static_cast<double>(n) - 1.0) * (k - 1.0));
    return (bms - ems) / (bms + (k - 1.0) * ems);
}

// mask statistics used by the renderer monotonicity tests
struct MaskStats {
    std::int64_t count = 0;
    double cx = 0.0, cy = 0.0;
};

inline MaskStats mask_stats(const std::vector<std::uint8_t>& mask, int h, int w, std::uint8_t cls) {
    MaskStats s;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (mask[static_cast<std::size_t>(y) * w + x] == cls) {
                ++s.count;
                s.cx += x;
                s.cy += y;
            }
    if (s.count > 0) {
        s.cx /= static_cast<double>(s.count);
        s.cy /= static_cast<double>(s.count);
    }
    return s;
}

} // namespace oracles
