#pragma once

#include "agsl/numkernel/ops.hpp"

namespace agsl::graph {

/// A = row-softmax(ReLU(E·Eᵀ)); row-stochastic with strictly positive entries.
inline Var adaptive_adjacency(Var embedding) {
    if (embedding.shape().size() != 2) throw ShapeError("adaptive_adjacency", {embedding.shape()});
    Tape& t = *embedding.tape();
    FlopScope scope(t, FlopTerm::Adjacency);
    return ops::softmax_last(ops::relu(ops::matmul(embedding, ops::transpose(embedding))));
}

inline Tensor compute_adaptive_adjacency(const Tensor& embedding) {
    Tape t(nullptr, false);
    return adaptive_adjacency(t.constant(embedding)).value();
}

/// Elementwise A ⊙ M. No renormalisation.
inline Var apply_mask(Var adjacency, Var mask) {
    if (adjacency.shape() != mask.shape()) throw ShapeError("apply_mask", {adjacency.shape(), mask.shape()});
    FlopScope scope(*adjacency.tape(), FlopTerm::Adjacency);
    return ops::mul(adjacency, mask);
}

inline Tensor apply_mask(const Tensor& adjacency, const Tensor& mask) {
    Tape t(nullptr, false);
    return apply_mask(t.constant(adjacency), t.constant(mask)).value();
}

}  // namespace agsl::graph
