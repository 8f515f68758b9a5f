#pragma once

#include <cmath>
#include <map>
#include <string>

#include "agsl/numkernel/param_set.hpp"

namespace agsl::sparsify {

struct AdamConfig {
    double lr = 3e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double max_grad_norm = 5.0;  // global clipping; ≤ 0 disables
};

/// Adaptive moment estimation over the trainable entries of a ParamSet.
/// Moments are keyed by parameter name, so parameters added later (the
/// gate weight) start with zero moments.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    /// Applies one update from the gradients currently stored in `p`.
    /// Returns the pre-clipping global gradient norm.
    double step(ParamSet& p) {
        double sq = 0.0;
        for (const auto& [name, prm] : p)
            if (prm.trainable)
                for (double g : prm.grad.data()) sq += g * g;
        const double norm = std::sqrt(sq);
        const double clip = (cfg_.max_grad_norm > 0.0 && norm > cfg_.max_grad_norm) ? cfg_.max_grad_norm / norm : 1.0;
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (auto& [name, prm] : p) {
            if (!prm.trainable) continue;
            auto& st = state_[name];
            if (st.m.shape() != prm.value.shape()) st = {Tensor(prm.value.shape(), 0.0), Tensor(prm.value.shape(), 0.0)};
            for (std::size_t k = 0; k < prm.value.size(); ++k) {
                const double g = prm.grad[k] * clip;
                st.m[k] = cfg_.beta1 * st.m[k] + (1.0 - cfg_.beta1) * g;
                st.v[k] = cfg_.beta2 * st.v[k] + (1.0 - cfg_.beta2) * g * g;
                prm.value[k] -= cfg_.lr * (st.m[k] / c1) / (std::sqrt(st.v[k] / c2) + cfg_.eps);
            }
        }
        return norm;
    }

    std::size_t steps() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    struct Moments {
        Tensor m, v;
    };
    AdamConfig cfg_;
    std::size_t t_ = 0;
    std::map<std::string, Moments> state_;
};

}  // namespace agsl::sparsify
