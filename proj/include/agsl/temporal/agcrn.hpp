#pragma once

#include <string>
#include <vector>

#include "agsl/graph/adjacency.hpp"
#include "agsl/graph/napl_agcn.hpp"
#include "agsl/numkernel/ops.hpp"
#include "agsl/numkernel/rng.hpp"
#include "agsl/temporal/config.hpp"

namespace agsl::temporal {

/// Node-specific weights of one recurrent cell, materialised once per forward.
struct AgcrnCellWeights {
    Var gate_theta;  // N × (Cin+F) × 2F  (update ‖ reset)
    Var gate_bias;   // N × 1 × 2F
    Var cand_theta;  // N × (Cin+F) × F
    Var cand_bias;   // N × 1 × F
};

inline std::string agcrn_param(std::size_t layer, const char* what) {
    return "agcrn.l" + std::to_string(layer) + "." + what;
}

inline AgcrnCellWeights agcrn_cell_weights(Tape& t, const ParamSet& p, Var embedding, std::size_t layer) {
    return {graph::node_weights(embedding, t.param(p, agcrn_param(layer, "gate.w"))),
            graph::node_bias(embedding, t.param(p, agcrn_param(layer, "gate.b"))),
            graph::node_weights(embedding, t.param(p, agcrn_param(layer, "cand.w"))),
            graph::node_bias(embedding, t.param(p, agcrn_param(layer, "cand.b")))};
}

/// GRU step with every affine map realised as a NAPL-AGCN layer over the
/// shared masked adjacency. x is N×B×Cin, h_prev N×B×F.
inline Var agcrn_cell_step(Var h_prev, Var x, Var a_eff, const AgcrnCellWeights& w) {
    const std::size_t f = h_prev.shape().back();
    Var xh = ops::concat_last({x, h_prev});
    Var zr = graph::napl_agcn(a_eff, xh, w.gate_theta, w.gate_bias, graph::Activation::Sigmoid);
    Var update = ops::slice_last(zr, 0, f);
    Var reset = ops::slice_last(zr, f, 2 * f);
    Tape& t = *x.tape();
    Var xrh;
    {
        FlopScope scope(t, FlopTerm::Elementwise);
        xrh = ops::concat_last({x, ops::mul(reset, h_prev)});
    }
    Var cand = graph::napl_agcn(a_eff, xrh, w.cand_theta, w.cand_bias, graph::Activation::Tanh);
    FlopScope scope(t, FlopTerm::Elementwise);
    Var keep = ops::mul(update, h_prev);
    Var fresh = ops::mul(ops::shift(ops::scale(update, -1.0), 1.0), cand);
    return ops::add(keep, fresh);
}

inline void agcrn_init(const ModelConfig& cfg, ParamSet& p, Rng& rng) {
    const std::size_t d = cfg.embed_dim, f = cfg.hidden;
    auto uniform = [&](Shape s, std::size_t fan_in) {
        const double b = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Tensor t(std::move(s));
        for (auto& v : t.data()) v = rng.uniform(-b, b);
        return t;
    };
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const std::size_t cin = (l == 0 ? cfg.in_channels : f) + f;
        p.add(agcrn_param(l, "gate.w"), uniform({d, cin, 2 * f}, cin));
        p.add(agcrn_param(l, "gate.b"), Tensor(Shape{d, 2 * f}, 0.0));
        p.add(agcrn_param(l, "cand.w"), uniform({d, cin, f}, cin));
        p.add(agcrn_param(l, "cand.b"), Tensor(Shape{d, f}, 0.0));
    }
    p.add("head.w", uniform({f, cfg.output_width()}, f));
    p.add("head.b", Tensor(Shape{1, cfg.output_width()}, 0.0));
}

/// Shared per-node linear readout: N×B×F → N×B×(H·C).
inline Var linear_head(Tape& t, const ParamSet& p, Var h) {
    const Shape s = h.shape();
    FlopScope scope(t, FlopTerm::Elementwise);
    Var flat = ops::reshape(h, Shape{s[0] * s[1], s[2]});
    Var y = ops::add(ops::matmul(flat, t.param(p, "head.w")), t.param(p, "head.b"));
    return ops::reshape(y, Shape{s[0], s[1], y.shape()[1]});
}

/// Copies timestep `step` of a N×T×B×C history tensor into a N×B×C tensor.
inline Tensor history_step(const Tensor& history, std::size_t step) {
    const std::size_t n = history.dim(0), tt = history.dim(1), b = history.dim(2), c = history.dim(3);
    Tensor x(Shape{n, b, c});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < b * c; ++k) x[i * b * c + k] = history[(i * tt + step) * b * c + k];
    return x;
}

/// Unrolls the stacked cells over the window and projects the last hidden
/// state. history is N×T×B×C; result is N×B×(H·C).
inline Var agcrn_forward(Tape& t, const ModelConfig& cfg, const ParamSet& p, const Tensor& history, Var a_eff) {
    const Shape& s = history.shape();
    if (s.size() != 4 || s[0] != cfg.num_nodes || s[1] != cfg.history || s[3] != cfg.in_channels)
        throw ShapeError("agcrn_forward", {s}, "expected [N, T, B, C] = [" + std::to_string(cfg.num_nodes) + ", " +
                                                   std::to_string(cfg.history) + ", B, " +
                                                   std::to_string(cfg.in_channels) + "]");
    const std::size_t batch = s[2];
    Var embedding = t.param(p, "embedding");
    std::vector<AgcrnCellWeights> weights;
    for (std::size_t l = 0; l < cfg.layers; ++l) weights.push_back(agcrn_cell_weights(t, p, embedding, l));
    std::vector<Var> h(cfg.layers, t.constant(Tensor(Shape{cfg.num_nodes, batch, cfg.hidden}, 0.0)));
    for (std::size_t step = 0; step < cfg.history; ++step) {
        try {
            Var input = t.constant(history_step(history, step));
            for (std::size_t l = 0; l < cfg.layers; ++l) {
                h[l] = agcrn_cell_step(h[l], input, a_eff, weights[l]);
                input = h[l];
            }
        } catch (const NumericError& e) {
            throw NumericError("agcrn timestep " + std::to_string(step) + ": " + e.what());
        }
    }
    return linear_head(t, p, h.back());
}

}  // namespace agsl::temporal
