#pragma once

#include <cmath>
#include <vector>

#include <json.hpp>

#include "agsl/numkernel/tensor.hpp"

namespace agsl::metrics {

struct HorizonMetrics {
    double mae = 0.0;
    double rmse = 0.0;
    double mape = 0.0;
    bool mape_defined = false;
};

/// Accuracy of a forecast. MAPE is a percentage over targets with
/// |y| ≥ mape_epsilon; when none qualify it is flagged undefined.
struct MetricReport {
    double mae = 0.0;
    double rmse = 0.0;
    double mape = 0.0;
    bool mape_defined = false;
    std::size_t count = 0;
    std::size_t mape_count = 0;
    std::vector<HorizonMetrics> per_horizon;
};

namespace detail {

struct Accum {
    double abs = 0.0, sq = 0.0, pct = 0.0;
    std::size_t n = 0, n_pct = 0;

    void add(double p, double y, double eps) {
        const double d = p - y;
        abs += std::abs(d);
        sq += d * d;
        ++n;
        if (std::abs(y) >= eps) {
            pct += std::abs(d) / std::abs(y);
            ++n_pct;
        }
    }
    HorizonMetrics finish() const {
        HorizonMetrics m;
        if (n == 0) return m;
        m.mae = abs / static_cast<double>(n);
        m.rmse = std::sqrt(sq / static_cast<double>(n));
        m.mape_defined = n_pct > 0;
        m.mape = n_pct ? 100.0 * pct / static_cast<double>(n_pct) : 0.0;
        return m;
    }
};

}  // namespace detail

inline constexpr double kDefaultMapeEpsilon = 1e-3;

/// `horizon` > 0 adds a per-step breakdown for tensors laid out
/// N × B × (H·C) with the last index h·C + c.
inline MetricReport compute_metrics(const Tensor& pred, const Tensor& target, double mape_epsilon = kDefaultMapeEpsilon,
                                    std::size_t horizon = 0) {
    if (pred.shape() != target.shape()) throw ShapeError("compute_metrics", {pred.shape(), target.shape()});
    if (pred.size() == 0) throw std::invalid_argument("compute_metrics: empty input");
    if (horizon && (pred.rank() == 0 || pred.shape().back() % horizon != 0))
        throw ShapeError("compute_metrics", {pred.shape()}, "last axis not divisible by horizon");
    detail::Accum all;
    std::vector<detail::Accum> steps(horizon);
    const std::size_t last = pred.rank() ? pred.shape().back() : 1;
    const std::size_t channels = horizon ? last / horizon : 1;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        all.add(pred[k], target[k], mape_epsilon);
        if (horizon) steps[(k % last) / channels].add(pred[k], target[k], mape_epsilon);
    }
    const HorizonMetrics m = all.finish();
    MetricReport r{m.mae, m.rmse, m.mape, m.mape_defined, all.n, all.n_pct, {}};
    for (const auto& s : steps) r.per_horizon.push_back(s.finish());
    return r;
}

inline nlohmann::json to_json(const MetricReport& r) {
    nlohmann::json j{{"mae", r.mae}, {"rmse", r.rmse}, {"count", r.count}};
    j["mape"] = r.mape_defined ? nlohmann::json(r.mape) : nlohmann::json(nullptr);
    j["mape_defined"] = r.mape_defined;
    if (!r.per_horizon.empty()) {
        auto& ph = j["per_horizon"] = nlohmann::json::array();
        for (const auto& h : r.per_horizon)
            ph.push_back({{"mae", h.mae},
                          {"rmse", h.rmse},
                          {"mape", h.mape_defined ? nlohmann::json(h.mape) : nlohmann::json(nullptr)}});
    }
    return j;
}

}  // namespace agsl::metrics
