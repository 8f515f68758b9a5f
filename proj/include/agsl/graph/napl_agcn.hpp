#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include "agsl/numkernel/ops.hpp"

namespace agsl::graph {

enum class Activation { Identity, Sigmoid, Tanh, Relu };

inline Var activate(Var x, Activation act) {
    switch (act) {
        case Activation::Identity: return x;
        case Activation::Sigmoid: return ops::sigmoid(x);
        case Activation::Tanh: return ops::tanh(x);
        case Activation::Relu: return ops::relu(x);
    }
    throw std::logic_error("unknown activation");
}

/// Node-specific weights Θ_i = Σ_k E[i,k]·W_G[k]. W_G is d×C×F, result N×C×F.
inline Var node_weights(Var embedding, Var weight_pool) {
    const Shape &se = embedding.shape(), &sw = weight_pool.shape();
    if (se.size() != 2 || sw.size() != 3 || se[1] != sw[0]) throw ShapeError("node_weights", {se, sw});
    FlopScope scope(*embedding.tape(), FlopTerm::NodeParam);
    Var flat = ops::reshape(weight_pool, Shape{sw[0], sw[1] * sw[2]});
    return ops::reshape(ops::matmul(embedding, flat), Shape{se[0], sw[1], sw[2]});
}

/// Node-specific bias b_i = E_i·B (B is d×F), result N×1×F for broadcasting.
inline Var node_bias(Var embedding, Var bias_pool) {
    const Shape &se = embedding.shape(), &sb = bias_pool.shape();
    if (se.size() != 2 || sb.size() != 2 || se[1] != sb[0]) throw ShapeError("node_bias", {se, sb});
    FlopScope scope(*embedding.tape(), FlopTerm::NodeParam);
    return ops::reshape(ops::matmul(embedding, bias_pool), Shape{se[0], 1, sb[1]});
}

/// Σ_j A[i,j]·X_j for node-major input X of shape N×B×C.
inline Var graph_aggregate(Var a_eff, Var x) {
    FlopScope scope(*x.tape(), FlopTerm::Aggregation);
    return ops::aggregate(a_eff, x);
}

/// Per-node transform of already aggregated features: Y_i = X_i·Θ_i (+ b_i),
/// then the activation. X is N×B×C, Θ is N×C×F, bias N×1×F.
inline Var node_transform(Var aggregated, Var theta, std::optional<Var> bias, Activation act) {
    const Shape &sx = aggregated.shape(), &st = theta.shape();
    if (sx.size() != 3 || st.size() != 3 || sx[0] != st[0] || sx[2] != st[1])
        throw ShapeError("napl_agcn", {sx, st});
    Tape& t = *aggregated.tape();
    Var y;
    {
        FlopScope scope(t, FlopTerm::Temporal);
        y = ops::bmm(aggregated, theta);
    }
    FlopScope scope(t, FlopTerm::Elementwise);
    if (bias) y = ops::add(y, *bias);
    return activate(y, act);
}

/// Z = σ(A_eff · X · Θ) with node-specific Θ; X is N×B×C.
inline Var napl_agcn(Var a_eff, Var x, Var theta, std::optional<Var> bias, Activation act) {
    const Shape &sa = a_eff.shape(), &sx = x.shape();
    if (sa.size() != 2 || sa[0] != sa[1] || sx.size() != 3 || sx[0] != sa[0]) throw ShapeError("napl_agcn", {sa, sx});
    return node_transform(graph_aggregate(a_eff, x), theta, bias, act);
}

/// Value-level layer on a single feature matrix: A_eff N×N, X N×C, E N×d,
/// W_G d×C×F → Z N×F.
inline Tensor napl_agcn_forward(const Tensor& a_eff, const Tensor& x, const Tensor& embedding,
                                const Tensor& weight_pool, Activation act = Activation::Identity) {
    if (x.rank() != 2 || embedding.rank() != 2 || weight_pool.rank() != 3 || a_eff.rank() != 2 ||
        x.dim(0) != embedding.dim(0) || a_eff.dim(0) != x.dim(0) || weight_pool.dim(1) != x.dim(1))
        throw ShapeError("napl_agcn_forward", {a_eff.shape(), x.shape(), embedding.shape(), weight_pool.shape()});
    Tape t(nullptr, false);
    Var theta = node_weights(t.constant(embedding), t.constant(weight_pool));
    Var xin = t.constant(x.reshaped(Shape{x.dim(0), 1, x.dim(1)}));
    Var z = napl_agcn(t.constant(a_eff), xin, theta, std::nullopt, act);
    return z.value().reshaped(Shape{x.dim(0), weight_pool.dim(2)});
}

}  // namespace agsl::graph
