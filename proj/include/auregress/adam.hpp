#pragma once

#include "auregress/tensor.hpp"

namespace auregress {

class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<TensorPtr>& params) {
        if (m_.empty()) {
            for (const auto& p : params) {
                m_.emplace_back(p->value.size(), 0.0);
                v_.emplace_back(p->value.size(), 0.0);
            }
        }
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            auto& p = *params[pi];
            p.ensure_grad();
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                const double g = p.grad[i];
                m_[pi][i] = beta1_ * m_[pi][i] + (1.0 - beta1_) * g;
                v_[pi][i] = beta2_ * v_[pi][i] + (1.0 - beta2_) * g * g;
                p.value[i] -= lr_ * (m_[pi][i] / c1) / (std::sqrt(v_[pi][i] / c2) + eps_);
            }
        }
    }

    double lr() const { return lr_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

} // namespace auregress
