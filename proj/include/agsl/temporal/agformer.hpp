#pragma once

#include <cmath>
#include <string>

#include "agsl/graph/napl_agcn.hpp"
#include "agsl/numkernel/ops.hpp"
#include "agsl/numkernel/rng.hpp"
#include "agsl/temporal/agcrn.hpp"
#include "agsl/temporal/config.hpp"

namespace agsl::temporal {

inline std::string agformer_param(std::size_t block, const char* what) {
    return "agformer.b" + std::to_string(block) + "." + what;
}

/// Sinusoidal encoding over the time axis laid out as 1×(T·B)×F, t-major.
inline Tensor positional_encoding(std::size_t steps, std::size_t batch, std::size_t width) {
    Tensor pe(Shape{1, steps * batch, width});
    for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t i = 0; i < width; ++i) {
            const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
            const double v = (i % 2 == 0) ? std::sin(static_cast<double>(t) * freq) : std::cos(static_cast<double>(t) * freq);
            for (std::size_t b = 0; b < batch; ++b) pe[(t * batch + b) * width + i] = v;
        }
    return pe;
}

/// Multi-head self-attention across time, independently per node and sample.
/// q, k, v are N×(T·B)×F (t-major). If `weights` is non-null it receives the
/// attention matrix, shaped (N·B·heads)×T×T.
inline Var temporal_attention(Var q, Var k, Var v, std::size_t steps, std::size_t heads, Tensor* weights = nullptr) {
    const Shape s = q.shape();
    const std::size_t n = s[0], f = s[2], batch = s[1] / steps, dh = f / heads;
    Tape& t = *q.tape();
    FlopScope scope(t, FlopTerm::Temporal);
    auto split = [&](Var x) {
        Var r = ops::reshape(x, Shape{n, steps, batch, heads, dh});
        r = ops::permute(r, {0, 2, 3, 1, 4});
        return ops::reshape(r, Shape{n * batch * heads, steps, dh});
    };
    Var qh = split(q), kh = split(k), vh = split(v);
    Var scores = ops::scale(ops::bmm(qh, ops::permute(kh, {0, 2, 1})), 1.0 / std::sqrt(static_cast<double>(dh)));
    Var attn = ops::softmax_last(scores);
    if (weights) *weights = attn.value();
    Var out = ops::bmm(attn, vh);
    out = ops::reshape(out, Shape{n, batch, heads, steps, dh});
    out = ops::permute(out, {0, 3, 1, 2, 4});
    return ops::reshape(out, Shape{n, steps * batch, f});
}

/// Pre-norm transformer block whose projections are NAPL-AGCN layers over
/// the shared masked adjacency. x is N×(T·B)×F.
inline Var agformer_block(Tape& t, const ModelConfig& cfg, const ParamSet& p, Var x, Var a_eff, Var embedding,
                          std::size_t block, Tensor* attention_weights = nullptr) {
    if (x.shape().size() != 3 || x.shape()[2] != cfg.hidden || x.shape()[1] % cfg.history != 0)
        throw ShapeError("agformer_block", {x.shape()});
    auto theta = [&](const char* w) { return graph::node_weights(embedding, t.param(p, agformer_param(block, w))); };
    auto bias = [&](const char* b) { return graph::node_bias(embedding, t.param(p, agformer_param(block, b))); };
    using graph::Activation;

    Var h;
    {
        FlopScope scope(t, FlopTerm::Elementwise);
        h = ops::layer_norm_last(x, t.param(p, agformer_param(block, "ln1.g")), t.param(p, agformer_param(block, "ln1.b")));
    }
    Var agg = graph::graph_aggregate(a_eff, h);
    Var q = graph::node_transform(agg, theta("q.w"), bias("q.b"), Activation::Identity);
    Var k = graph::node_transform(agg, theta("k.w"), bias("k.b"), Activation::Identity);
    Var v = graph::node_transform(agg, theta("v.w"), bias("v.b"), Activation::Identity);
    Var att = temporal_attention(q, k, v, cfg.history, cfg.heads, attention_weights);
    Var o = graph::napl_agcn(a_eff, att, theta("o.w"), bias("o.b"), Activation::Identity);
    {
        FlopScope scope(t, FlopTerm::Elementwise);
        x = ops::add(x, o);
        h = ops::layer_norm_last(x, t.param(p, agformer_param(block, "ln2.g")), t.param(p, agformer_param(block, "ln2.b")));
    }
    Var ff = graph::napl_agcn(a_eff, h, theta("ff1.w"), bias("ff1.b"), Activation::Relu);
    ff = graph::napl_agcn(a_eff, ff, theta("ff2.w"), bias("ff2.b"), Activation::Identity);
    FlopScope scope(t, FlopTerm::Elementwise);
    return ops::add(x, ff);
}

inline void agformer_init(const ModelConfig& cfg, ParamSet& p, Rng& rng) {
    const std::size_t d = cfg.embed_dim, f = cfg.hidden, ffw = cfg.ff_width;
    auto uniform = [&](Shape s, std::size_t fan_in) {
        const double b = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Tensor t(std::move(s));
        for (auto& v : t.data()) v = rng.uniform(-b, b);
        return t;
    };
    p.add("embed.w", uniform({cfg.in_channels, f}, cfg.in_channels));
    p.add("embed.b", Tensor(Shape{1, f}, 0.0));
    for (std::size_t b = 0; b < cfg.layers; ++b) {
        p.add(agformer_param(b, "ln1.g"), Tensor(Shape{f}, 1.0));
        p.add(agformer_param(b, "ln1.b"), Tensor(Shape{f}, 0.0));
        p.add(agformer_param(b, "ln2.g"), Tensor(Shape{f}, 1.0));
        p.add(agformer_param(b, "ln2.b"), Tensor(Shape{f}, 0.0));
        for (const char* w : {"q", "k", "v", "o"}) {
            p.add(agformer_param(b, (std::string(w) + ".w").c_str()), uniform({d, f, f}, f));
            p.add(agformer_param(b, (std::string(w) + ".b").c_str()), Tensor(Shape{d, f}, 0.0));
        }
        p.add(agformer_param(b, "ff1.w"), uniform({d, f, ffw}, f));
        p.add(agformer_param(b, "ff1.b"), Tensor(Shape{d, ffw}, 0.0));
        p.add(agformer_param(b, "ff2.w"), uniform({d, ffw, f}, ffw));
        p.add(agformer_param(b, "ff2.b"), Tensor(Shape{d, f}, 0.0));
    }
    p.add("head.w", uniform({f, cfg.output_width()}, f));
    p.add("head.b", Tensor(Shape{1, cfg.output_width()}, 0.0));
}

/// Per-node input embedding plus positional encoding: N×T×B×C → N×(T·B)×F.
inline Var agformer_embed(Tape& t, const ModelConfig& cfg, const ParamSet& p, const Tensor& history) {
    const Shape& s = history.shape();
    const std::size_t n = s[0], steps = s[1], batch = s[2], c = s[3];
    FlopScope scope(t, FlopTerm::Elementwise);
    Var x = t.constant(history.reshaped(Shape{n * steps * batch, c}));
    Var e = ops::add(ops::matmul(x, t.param(p, "embed.w")), t.param(p, "embed.b"));
    e = ops::reshape(e, Shape{n, steps * batch, cfg.hidden});
    return ops::add(e, t.constant(positional_encoding(steps, batch, cfg.hidden)));
}

/// Embedding → blocks → temporal mean-pool → shared linear head.
/// history is N×T×B×C; result is N×B×(H·C).
inline Var agformer_forward(Tape& t, const ModelConfig& cfg, const ParamSet& p, const Tensor& history, Var a_eff) {
    const Shape& s = history.shape();
    if (s.size() != 4 || s[0] != cfg.num_nodes || s[1] != cfg.history || s[3] != cfg.in_channels)
        throw ShapeError("agformer_forward", {s});
    const std::size_t n = s[0], steps = s[1], batch = s[2];
    Var embedding = t.param(p, "embedding");
    Var x = agformer_embed(t, cfg, p, history);
    for (std::size_t b = 0; b < cfg.layers; ++b) {
        try {
            x = agformer_block(t, cfg, p, x, a_eff, embedding, b);
        } catch (const NumericError& e) {
            throw NumericError("agformer block " + std::to_string(b) + ": " + e.what());
        }
    }
    Var pooled;
    {
        FlopScope scope(t, FlopTerm::Elementwise);
        pooled = ops::mean_axis(ops::reshape(x, Shape{n, steps, batch, cfg.hidden}), 1);
    }
    return linear_head(t, p, pooled);
}

}  // namespace agsl::temporal
