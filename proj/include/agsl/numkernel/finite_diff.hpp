#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>

#include "agsl/numkernel/param_set.hpp"

namespace agsl {

using GradientMap = std::map<std::string, Tensor>;

/// Central-difference estimate of d f / d p for every entry of every
/// trainable parameter. `params` is perturbed in place and restored.
inline GradientMap finite_diff_gradient(const std::function<double(const ParamSet&)>& f, ParamSet& params,
                                        double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_gradient: eps must be positive");
    GradientMap out;
    for (auto& [name, p] : params) {
        if (!p.trainable) continue;
        Tensor g(p.value.shape(), 0.0);
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double orig = p.value[i];
            p.value[i] = orig + eps;
            const double fp = f(params);
            p.value[i] = orig - eps;
            const double fm = f(params);
            p.value[i] = orig;
            g[i] = (fp - fm) / (2.0 * eps);
        }
        out.emplace(name, std::move(g));
    }
    return out;
}

/// Relative error |a-b| / max(|a|, |b|, floor). The floor keeps entries
/// that are both ~0 from dominating.
inline double relative_error(double a, double b, double floor = 1e-8) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-8) {
    if (a.shape() != b.shape()) throw ShapeError("max_relative_error", {a.shape(), b.shape()});
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, relative_error(a[i], b[i], floor));
    return m;
}

}  // namespace agsl
