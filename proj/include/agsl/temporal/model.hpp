#pragma once

#include <cstdint>

#include "agsl/graph/adjacency.hpp"
#include "agsl/graph/hard_concrete.hpp"
#include "agsl/temporal/agcrn.hpp"
#include "agsl/temporal/agformer.hpp"
#include "agsl/temporal/config.hpp"

namespace agsl::temporal {

inline constexpr const char* kEmbeddingParam = "embedding";
inline constexpr const char* kGateWeightParam = "gate_logits.w";

/// Fresh parameters: E ~ U(−1,1)·embed_init_scale, weight tensors
/// ~ U(±1/√fan_in), biases zero, layer-norm gains one.
inline ParamSet init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    ParamSet p;
    Tensor e(Shape{cfg.num_nodes, cfg.embed_dim});
    for (auto& v : e.data()) v = rng.uniform(-1.0, 1.0) * cfg.embed_init_scale;
    p.add(kEmbeddingParam, std::move(e));
    if (cfg.arch == Architecture::Agcrn)
        agcrn_init(cfg, p, rng);
    else
        agformer_init(cfg, p, rng);
    return p;
}

/// Adds the gate-logit factor W_E (d×N) used during sparsification.
inline void add_gate_weight(const ModelConfig& cfg, ParamSet& p, std::uint64_t seed) {
    if (p.contains(kGateWeightParam)) return;
    Rng rng(seed ^ 0x6a09e667f3bcc909ULL);
    const double b = 1.0 / std::sqrt(static_cast<double>(cfg.embed_dim));
    Tensor w(Shape{cfg.embed_dim, cfg.num_nodes});
    for (auto& v : w.data()) v = rng.uniform(-b, b);
    p.add(kGateWeightParam, std::move(w));
}

inline Var model_adjacency(Tape& t, const ParamSet& p) { return graph::adaptive_adjacency(t.param(p, kEmbeddingParam)); }

/// Forecast for a N×T×B×C history under the given effective adjacency.
inline Var forecast(Tape& t, const ModelConfig& cfg, const ParamSet& p, const Tensor& history, Var a_eff) {
    if (a_eff.shape() != Shape{cfg.num_nodes, cfg.num_nodes}) throw ShapeError("forecast", {a_eff.shape()});
    return cfg.arch == Architecture::Agcrn ? agcrn_forward(t, cfg, p, history, a_eff)
                                           : agformer_forward(t, cfg, p, history, a_eff);
}

/// Forecast with A_adp ⊙ mask for a fixed (binary) mask tensor.
inline Var forecast_masked(Tape& t, const ModelConfig& cfg, const ParamSet& p, const Tensor& history,
                           const Tensor& mask) {
    Var a = graph::apply_mask(model_adjacency(t, p), t.constant(mask));
    return forecast(t, cfg, p, history, a);
}

/// Value-level inference with the binary mask of `mask`.
inline Tensor predict(const ModelConfig& cfg, const ParamSet& p, const Tensor& history, const graph::EdgeMask& mask,
                      FlopCounter* counter = nullptr) {
    Tape t(counter, false);
    return forecast_masked(t, cfg, p, history, mask.binary()).value();
}

}  // namespace agsl::temporal
