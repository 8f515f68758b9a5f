#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "agsl/numkernel/ops.hpp"

namespace agsl::graph {

/// Hard-concrete gate hyperparameters. The stretch interval is
/// [stretch_low, stretch_high] and must strictly contain [0, 1]; the
/// orientation is such that larger logits give larger gates.
struct GateParams {
    double beta = 2.0 / 3.0;
    double stretch_low = -0.1;
    double stretch_high = 1.1;

    void validate() const {
        if (!(beta > 0.0)) throw std::invalid_argument("gate temperature beta must be > 0");
        if (!(stretch_low < 0.0 && stretch_high > 1.0))
            throw std::invalid_argument("gate stretch interval must strictly contain [0, 1]");
    }

    /// β·log(−low/high); subtracting it from a logit gives the logit of P(gate ≠ 0).
    double l0_offset() const { return beta * std::log(-stretch_low / stretch_high); }
};

/// Frozen state of the N×N edge gates. Frozen-keep entries are forced to 1,
/// frozen-prune entries to 0; the rest are free and follow their logits.
class EdgeMask {
public:
    EdgeMask() = default;
    explicit EdgeMask(std::size_t n) : n_(n), keep_(n * n, 0), prune_(n * n, 0) {}

    /// Every off-diagonal entry free, diagonal frozen-keep (unless it is prunable).
    static EdgeMask initial(std::size_t n, bool prune_diagonal = false) {
        EdgeMask m(n);
        if (!prune_diagonal)
            for (std::size_t i = 0; i < n; ++i) m.keep_[i * n + i] = 1;
        return m;
    }

    /// Only the diagonal survives.
    static EdgeMask diagonal_only(std::size_t n) {
        EdgeMask m(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) (i == j ? m.keep_ : m.prune_)[i * n + j] = 1;
        return m;
    }

    std::size_t n() const noexcept { return n_; }
    bool is_keep(std::size_t i, std::size_t j) const { return keep_[i * n_ + j] != 0; }
    bool is_prune(std::size_t i, std::size_t j) const { return prune_[i * n_ + j] != 0; }
    bool is_free(std::size_t i, std::size_t j) const { return !is_keep(i, j) && !is_prune(i, j); }

    void set_keep(std::size_t i, std::size_t j) {
        if (is_prune(i, j)) throw std::logic_error("edge is frozen-prune; pruned edges are never revived");
        keep_[i * n_ + j] = 1;
    }
    void set_prune(std::size_t i, std::size_t j) {
        keep_[i * n_ + j] = 0;
        prune_[i * n_ + j] = 1;
    }
    void set_free(std::size_t i, std::size_t j) {
        if (is_prune(i, j)) throw std::logic_error("edge is frozen-prune; pruned edges are never revived");
        keep_[i * n_ + j] = 0;
    }

    const std::vector<std::uint8_t>& keep_flags() const noexcept { return keep_; }
    const std::vector<std::uint8_t>& prune_flags() const noexcept { return prune_; }

    std::vector<std::size_t> free_indices() const {
        std::vector<std::size_t> idx;
        for (std::size_t k = 0; k < keep_.size(); ++k)
            if (!keep_[k] && !prune_[k]) idx.push_back(k);
        return idx;
    }
    std::size_t keep_count() const {
        std::size_t c = 0;
        for (auto v : keep_) c += v;
        return c;
    }
    std::size_t prune_count() const {
        std::size_t c = 0;
        for (auto v : prune_) c += v;
        return c;
    }

    Tensor keep_tensor() const { return flags_tensor(keep_); }
    Tensor free_tensor() const {
        Tensor t(Shape{n_, n_}, 0.0);
        for (std::size_t k = 0; k < keep_.size(); ++k) t[k] = (!keep_[k] && !prune_[k]) ? 1.0 : 0.0;
        return t;
    }

    /// Inference mask: 0 on frozen-prune entries, 1 everywhere else.
    Tensor binary() const {
        Tensor t(Shape{n_, n_}, 1.0);
        for (std::size_t k = 0; k < prune_.size(); ++k)
            if (prune_[k]) t[k] = 0.0;
        return t;
    }

    void validate() const {
        if (keep_.size() != n_ * n_ || prune_.size() != n_ * n_) throw std::invalid_argument("edge mask size mismatch");
        for (std::size_t k = 0; k < keep_.size(); ++k)
            if (keep_[k] && prune_[k]) throw std::invalid_argument("frozen keep and prune sets overlap");
    }

    friend bool operator==(const EdgeMask&, const EdgeMask&) = default;

private:
    Tensor flags_tensor(const std::vector<std::uint8_t>& f) const {
        Tensor t(Shape{n_, n_}, 0.0);
        for (std::size_t k = 0; k < f.size(); ++k) t[k] = f[k];
        return t;
    }

    std::size_t n_ = 0;
    std::vector<std::uint8_t> keep_, prune_;
};

/// U = E·W_E with E N×d and W_E d×N.
inline Var gate_logits(Var embedding, Var gate_weight) {
    const Shape &se = embedding.shape(), &sw = gate_weight.shape();
    if (se.size() != 2 || sw.size() != 2 || se[1] != sw[0] || sw[1] != se[0]) throw ShapeError("gate_logits", {se, sw});
    FlopScope scope(*embedding.tape(), FlopTerm::Elementwise);
    return ops::matmul(embedding, gate_weight);
}

namespace detail {

inline void check_mask(const Shape& u, const EdgeMask& mask, const char* op) {
    if (u.size() != 2 || u[0] != u[1] || u[0] != mask.n()) throw ShapeError(op, {u, Shape{mask.n(), mask.n()}});
}

/// m·free + keep, so frozen entries take exactly 0 or 1.
inline Var override_frozen(Var gates, const EdgeMask& mask) {
    Tape& t = *gates.tape();
    return ops::add(ops::mul(gates, t.constant(mask.free_tensor())), t.constant(mask.keep_tensor()));
}

inline Var stretch_and_clamp(Var s, const GateParams& gp) {
    return ops::clamp(ops::shift(ops::scale(s, gp.stretch_high - gp.stretch_low), gp.stretch_low), 0.0, 1.0);
}

}  // namespace detail

/// Training-time stochastic gates: s = sigmoid((log z − log(1−z) + U)/β),
/// stretched to [low, high] and clamped to [0, 1]. `noise` holds z ~ U(0,1).
inline Var sample_hard_concrete(Var logits, const GateParams& gp, const Tensor& noise, const EdgeMask& mask) {
    gp.validate();
    detail::check_mask(logits.shape(), mask, "sample_hard_concrete");
    if (noise.shape() != logits.shape()) throw ShapeError("sample_hard_concrete", {logits.shape(), noise.shape()});
    Tensor noise_logit(noise.shape());
    for (std::size_t k = 0; k < noise.size(); ++k) {
        const double z = noise[k];
        if (!(z > 0.0 && z < 1.0)) throw std::domain_error("hard concrete noise must lie strictly inside (0, 1)");
        noise_logit[k] = std::log(z) - std::log1p(-z);
    }
    Tape& t = *logits.tape();
    FlopScope scope(t, FlopTerm::Elementwise);
    Var s = ops::sigmoid(ops::scale(ops::add(logits, t.constant(std::move(noise_logit))), 1.0 / gp.beta));
    return detail::override_frozen(detail::stretch_and_clamp(s, gp), mask);
}

/// Noise-free gates used for evaluation: clamp(sigmoid(U/β)·(high−low)+low, 0, 1).
inline Var deterministic_gate(Var logits, const GateParams& gp, const EdgeMask& mask) {
    gp.validate();
    detail::check_mask(logits.shape(), mask, "deterministic_gate");
    FlopScope scope(*logits.tape(), FlopTerm::Elementwise);
    Var s = ops::sigmoid(ops::scale(logits, 1.0 / gp.beta));
    return detail::override_frozen(detail::stretch_and_clamp(s, gp), mask);
}

inline Tensor deterministic_gate(const Tensor& logits, const GateParams& gp, const EdgeMask& mask) {
    Tape t(nullptr, false);
    return deterministic_gate(t.constant(logits), gp, mask).value();
}

/// Differentiable L0 surrogate: Σ over free entries of P(gate ≠ 0) =
/// sigmoid(U − β·log(−low/high)); frozen-keep entries add 1 each,
/// frozen-prune entries add 0.
inline Var expected_l0(Var logits, const GateParams& gp, const EdgeMask& mask) {
    gp.validate();
    detail::check_mask(logits.shape(), mask, "expected_l0");
    Tape& t = *logits.tape();
    FlopScope scope(t, FlopTerm::Elementwise);
    const double kept = static_cast<double>(mask.keep_count());
    auto free = mask.free_indices();
    if (free.empty()) return t.constant(Tensor::scalar(kept));
    Var p = ops::sigmoid(ops::shift(ops::gather(logits, std::move(free)), -gp.l0_offset()));
    return ops::shift(ops::sum(p), kept);
}

}  // namespace agsl::graph
