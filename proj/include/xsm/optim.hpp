#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "xsm/tape.hpp"

namespace xsm {

// Cosine decay from lr_start at step 0 to lr_end at total_steps.
struct CosineSchedule {
    double lr_start = 5e-4;
    double lr_end = 5e-5;
    int64_t total_steps = 1;

    double lr(int64_t step) const {
        if (step >= total_steps) return lr_end;
        const double t = static_cast<double>(step) / static_cast<double>(total_steps);
        return lr_end + 0.5 * (lr_start - lr_end) * (1.0 + std::cos(3.141592653589793 * t));
    }
};

// If the global L2 norm of all grads exceeds max_norm, scale them down to it.
// Returns the factor applied (1.0 when under the limit).
inline double clip_global_norm(std::span<Parameter* const> params, double max_norm = 1.0) {
    double sq = 0.0;
    for (const Parameter* p : params)
        for (float g : p->grad.data) sq += static_cast<double>(g) * static_cast<double>(g);
    const double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return 1.0;
    const double factor = max_norm / norm;
    for (Parameter* p : params)
        for (float& g : p->grad.data) g = static_cast<float>(g * factor);
    return factor;
}

// Decoupled-weight-decay Adam with bias correction.
class AdamW {
public:
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
    double weight_decay = 0.01;

    explicit AdamW(std::vector<Parameter*> params) : params_(std::move(params)) {
        for (Parameter* p : params_) {
            m_.push_back(Tensor::zeros(p->value.shape));
            v_.push_back(Tensor::zeros(p->value.shape));
        }
    }

    int64_t step_count() const { return t_; }
    const std::vector<Parameter*>& params() const { return params_; }

    void zero_grad() {
        for (Parameter* p : params_) p->zero_grad();
    }

    void step(double lr) {
        t_++;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
        for (size_t i = 0; i < params_.size(); i++) {
            Parameter* p = params_[i];
            auto& m = m_[i].data;
            auto& v = v_[i].data;
            for (size_t j = 0; j < p->value.data.size(); j++) {
                const double g = p->grad.data[j];
                m[j] = static_cast<float>(beta1 * m[j] + (1.0 - beta1) * g);
                v[j] = static_cast<float>(beta2 * v[j] + (1.0 - beta2) * g * g);
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                double w = p->value.data[j];
                w -= lr * weight_decay * w;  // decoupled decay
                w -= lr * mhat / (std::sqrt(vhat) + eps);
                p->value.data[j] = static_cast<float>(w);
            }
        }
    }

private:
    std::vector<Parameter*> params_;
    std::vector<Tensor> m_, v_;
    int64_t t_ = 0;
};

}  // namespace xsm
