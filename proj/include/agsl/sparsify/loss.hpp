#pragma once

#include "agsl/graph/hard_concrete.hpp"
#include "agsl/numkernel/ops.hpp"

namespace agsl::sparsify {

/// Σ over nodes and samples of the L1 norm of each node's prediction
/// vector (the last axis), divided by nodes × samples.
inline Var loss_prediction(Var pred, Var target) {
    if (pred.shape() != target.shape() || pred.shape().empty())
        throw ShapeError("loss_prediction", {pred.shape(), target.shape()});
    const double rows = static_cast<double>(pred.value().size() / pred.shape().back());
    return ops::scale(ops::sum(ops::abs(ops::sub(pred, target))), 1.0 / rows);
}

inline double loss_prediction(const Tensor& pred, const Tensor& target) {
    Tape t(nullptr, false);
    return loss_prediction(t.constant(pred), t.constant(target)).value().item();
}

/// Prediction loss plus λ times the expected number of non-zero gates.
/// With λ = 0 the result is the prediction loss node itself.
inline Var loss_ags(Var pred, Var target, Var logits, const graph::GateParams& gp, const graph::EdgeMask& mask,
                    double lambda) {
    if (!(lambda >= 0.0)) throw std::invalid_argument("loss_ags: lambda must be ≥ 0");
    Var base = loss_prediction(pred, target);
    if (lambda == 0.0) return base;
    return ops::add(base, ops::scale(graph::expected_l0(logits, gp, mask), lambda));
}

}  // namespace agsl::sparsify
