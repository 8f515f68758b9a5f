#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>

#include <json.hpp>

#include "agsl/graph/hard_concrete.hpp"
#include "agsl/numkernel/flop_counter.hpp"
#include "agsl/temporal/model.hpp"

namespace agsl::metrics {

using FlopBreakdown = std::array<std::uint64_t, static_cast<std::size_t>(FlopTerm::Count)>;

inline std::uint64_t breakdown_total(const FlopBreakdown& b) {
    std::uint64_t t = 0;
    for (auto v : b) t += v;
    return t;
}

/// Inference cost of `windows` single-window forward passes.
struct CostReport {
    std::string arch;
    std::size_t kept_edges = 0;  // non-zero entries of A ⊙ M, diagonal included
    std::size_t windows = 1;
    FlopBreakdown analytic{};
    std::uint64_t flops_analytic = 0;
    std::uint64_t flops_counted = 0;  // 0 when not instrumented
    FlopBreakdown counted{};

    std::uint64_t flops() const { return flops_counted ? flops_counted : flops_analytic; }
};

/// Entries of a mask tensor that let an adjacency value through.
inline std::size_t kept_edges(const Tensor& mask) {
    std::size_t k = 0;
    for (double v : mask.data())
        if (v != 0.0) ++k;
    return k;
}

inline std::size_t kept_edges(const graph::EdgeMask& mask) { return kept_edges(mask.binary()); }

namespace detail {

inline void charge(FlopBreakdown& b, FlopTerm t, std::uint64_t n) { b[static_cast<std::size_t>(t)] += n; }

// Adjacency construction: E·Eᵀ, ReLU, row softmax and the mask product.
inline void adjacency_cost(FlopBreakdown& b, std::uint64_t n, std::uint64_t d) {
    charge(b, FlopTerm::Adjacency, flop_cost::kMac * n * n * d + flop_cost::kElementwise * n * n +
                                       flop_cost::kSoftmax * n * n + flop_cost::kElementwise * n * n);
}

// Θ = E·W_G (d×cin×fout) plus b = E·B (d×fout).
inline void node_param_cost(FlopBreakdown& b, std::uint64_t n, std::uint64_t d, std::uint64_t cin, std::uint64_t fout) {
    charge(b, FlopTerm::NodeParam, flop_cost::kMac * n * d * cin * fout + flop_cost::kMac * n * d * fout);
}

// One NAPL-AGCN application over `cols` aggregated columns per node and `rows` rows per node.
inline void layer_cost(FlopBreakdown& b, std::uint64_t n, std::uint64_t kept, std::uint64_t rows, std::uint64_t cin,
                       std::uint64_t fout, std::uint64_t act_cost, bool aggregate = true) {
    if (aggregate) charge(b, FlopTerm::Aggregation, flop_cost::kMac * kept * rows * cin);
    charge(b, FlopTerm::Temporal, flop_cost::kMac * n * rows * cin * fout);
    charge(b, FlopTerm::Elementwise, (flop_cost::kElementwise + act_cost) * n * rows * fout);
}

inline void head_cost(FlopBreakdown& b, std::uint64_t n, std::uint64_t f, std::uint64_t out) {
    charge(b, FlopTerm::Elementwise, flop_cost::kMac * n * f * out + flop_cost::kElementwise * n * out);
}

inline FlopBreakdown agcrn_window(const temporal::ModelConfig& c, std::uint64_t kept) {
    FlopBreakdown b{};
    const std::uint64_t n = c.num_nodes, d = c.embed_dim, f = c.hidden, t = c.history;
    adjacency_cost(b, n, d);
    for (std::size_t l = 0; l < c.layers; ++l) {
        const std::uint64_t cin = (l == 0 ? c.in_channels : c.hidden) + f;
        node_param_cost(b, n, d, cin, 2 * f);
        node_param_cost(b, n, d, cin, f);
        FlopBreakdown step{};
        layer_cost(step, n, kept, 1, cin, 2 * f, flop_cost::kSigmoid);
        layer_cost(step, n, kept, 1, cin, f, flop_cost::kTanh);
        // r⊙h, then u⊙h + (1 − u)⊙c as mul, scale, shift, mul, add
        charge(step, FlopTerm::Elementwise, 6 * flop_cost::kElementwise * n * f);
        for (std::size_t k = 0; k < b.size(); ++k) b[k] += t * step[k];
    }
    head_cost(b, n, f, c.output_width());
    return b;
}

inline FlopBreakdown agformer_window(const temporal::ModelConfig& c, std::uint64_t kept) {
    FlopBreakdown b{};
    const std::uint64_t n = c.num_nodes, d = c.embed_dim, f = c.hidden, t = c.history, w = c.ff_width,
                        heads = c.heads, r = n * t;
    adjacency_cost(b, n, d);
    charge(b, FlopTerm::Elementwise, flop_cost::kMac * r * c.in_channels * f + 2 * flop_cost::kElementwise * r * f);
    const std::uint64_t ln = flop_cost::kLayerNorm * r * f + flop_cost::kLayerNormRow * r;
    for (std::size_t l = 0; l < c.layers; ++l) {
        for (int k = 0; k < 4; ++k) node_param_cost(b, n, d, f, f);
        node_param_cost(b, n, d, f, w);
        node_param_cost(b, n, d, w, f);
        charge(b, FlopTerm::Elementwise, 2 * ln + 2 * flop_cost::kElementwise * r * f);  // two norms, two residuals
        // q, k and v share one aggregation
        charge(b, FlopTerm::Aggregation, flop_cost::kMac * kept * t * f);
        for (int k = 0; k < 3; ++k) layer_cost(b, n, kept, t, f, f, 0, false);
        charge(b, FlopTerm::Temporal, 2 * flop_cost::kMac * n * t * t * f +
                                          (flop_cost::kElementwise + flop_cost::kSoftmax) * n * heads * t * t);
        layer_cost(b, n, kept, t, f, f, 0);
        layer_cost(b, n, kept, t, f, w, flop_cost::kElementwise);
        layer_cost(b, n, kept, t, w, f, 0);
    }
    charge(b, FlopTerm::Elementwise, r * f + n * f);  // temporal mean-pool
    head_cost(b, n, f, c.output_width());
    return b;
}

}  // namespace detail

/// Closed-form inference cost for `windows` windows, each evaluated as its
/// own forward pass. Charges mirror the kernel ops one for one, so the
/// result equals the instrumented count whenever no adjacency value
/// underflows to zero.
inline CostReport flops_analytic(const temporal::ModelConfig& cfg, std::size_t kept, std::size_t windows = 1) {
    cfg.validate();
    CostReport r;
    r.arch = temporal::to_string(cfg.arch);
    r.kept_edges = kept;
    r.windows = windows;
    const FlopBreakdown one =
        cfg.arch == temporal::Architecture::Agcrn ? detail::agcrn_window(cfg, kept) : detail::agformer_window(cfg, kept);
    for (std::size_t k = 0; k < one.size(); ++k) r.analytic[k] = one[k] * windows;
    r.flops_analytic = breakdown_total(r.analytic);
    return r;
}

/// Instrumented count over every window of a N×T×B×C history batch, one
/// forward per window. Terms annihilated by exactly-zero mask entries are
/// skipped by the aggregation kernel.
inline FlopBreakdown flops_counted(const temporal::ModelConfig& cfg, const ParamSet& p, const Tensor& mask,
                                   const Tensor& history) {
    const Shape& s = history.shape();
    if (s.size() != 4) throw ShapeError("flops_counted", {s}, "expected [N, T, B, C]");
    FlopCounter counter;
    for (std::size_t w = 0; w < s[2]; ++w) {
        Tensor one(Shape{s[0], s[1], 1, s[3]});
        for (std::size_t i = 0; i < s[0]; ++i)
            for (std::size_t t = 0; t < s[1]; ++t)
                for (std::size_t c = 0; c < s[3]; ++c) one[(i * s[1] + t) * s[3] + c] = history[((i * s[1] + t) * s[2] + w) * s[3] + c];
        Tape tape(&counter, false);
        temporal::forecast_masked(tape, cfg, p, one, mask);
    }
    FlopBreakdown b{};
    for (std::size_t k = 0; k < b.size(); ++k) b[k] = counter.get(static_cast<FlopTerm>(k));
    return b;
}

/// Analytic report with the instrumented count filled in.
inline CostReport cost_report(const temporal::ModelConfig& cfg, const ParamSet& p, const Tensor& mask,
                              const Tensor& history) {
    CostReport r = flops_analytic(cfg, kept_edges(mask), history.dim(2));
    r.counted = flops_counted(cfg, p, mask, history);
    r.flops_counted = breakdown_total(r.counted);
    return r;
}

inline double speedup(double dense_flops, double localised_flops) { return dense_flops / localised_flops; }

inline double speedup(const CostReport& dense, const CostReport& localised) {
    return speedup(static_cast<double>(dense.flops()), static_cast<double>(localised.flops()));
}

/// One decimal and a multiplication sign, e.g. "1.6×".
inline std::string format_speedup(double ratio) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f×", ratio);
    return buf;
}

inline nlohmann::json to_json(const CostReport& r) {
    nlohmann::json terms = nlohmann::json::object(), counted = nlohmann::json::object();
    for (std::size_t k = 0; k < r.analytic.size(); ++k) {
        terms[std::string(kFlopTermNames[k])] = r.analytic[k];
        counted[std::string(kFlopTermNames[k])] = r.counted[k];
    }
    nlohmann::json j{{"arch", r.arch},
                     {"kept_edges", r.kept_edges},
                     {"windows", r.windows},
                     {"flops_analytic", r.flops_analytic},
                     {"breakdown", terms}};
    if (r.flops_counted) {
        j["flops_counted"] = r.flops_counted;
        j["counted_breakdown"] = counted;
        j["relative_gap"] = std::abs(static_cast<double>(r.flops_counted) - static_cast<double>(r.flops_analytic)) /
                            static_cast<double>(r.flops_analytic);
    } else {
        j["flops_counted"] = nullptr;
    }
    return j;
}

}  // namespace agsl::metrics
