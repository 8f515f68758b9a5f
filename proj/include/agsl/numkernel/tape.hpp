#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "agsl/numkernel/flop_counter.hpp"
#include "agsl/numkernel/param_set.hpp"
#include "agsl/numkernel/tensor.hpp"

namespace agsl {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape() const noexcept { return tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

    inline const Tensor& value() const;
    inline const Shape& shape() const;
    inline bool requires_grad() const;

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Reverse-mode recording of a forward computation.
///
/// Nodes live in a deque so references to values stay valid while the
/// tape grows. A node only keeps a backward closure when at least one
/// parent requires a gradient, so inference tapes carry no closures.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t)>;

    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<std::size_t> parents;
        BackwardFn backward;
        bool requires_grad = false;
        const char* op = "";
    };

    explicit Tape(FlopCounter* counter = nullptr, bool record_grads = true)
        : counter_(counter), record_grads_(record_grads) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const noexcept { return record_grads_; }

    Var constant(Tensor value) { return push_leaf(std::move(value), false, "constant"); }

    /// Leaf that participates in differentiation but is not tied to a ParamSet.
    Var variable(Tensor value) { return push_leaf(std::move(value), record_grads_, "variable"); }

    /// Binds a named parameter; repeated binds return the same node.
    Var param(const ParamSet& params, const std::string& name) {
        if (auto it = bound_.find(name); it != bound_.end()) return Var(this, it->second);
        const Param& p = params.at(name);
        Var v = push_leaf(p.value, record_grads_ && p.trainable, "param");
        bound_.emplace(name, v.id());
        return v;
    }

    const std::map<std::string, std::size_t>& bound_params() const noexcept { return bound_; }

    const Node& node(std::size_t id) const { return nodes_.at(id); }
    Node& node(std::size_t id) { return nodes_.at(id); }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Gradient buffer for a node, allocated as zeros on first access.
    Tensor& grad_buffer(std::size_t id) {
        Node& n = nodes_.at(id);
        if (n.grad.shape() != n.value.shape() || n.grad.size() != n.value.size())
            n.grad = Tensor(n.value.shape(), 0.0);
        return n.grad;
    }

    const Tensor& grad(Var v) const {
        const Node& n = nodes_.at(v.id());
        if (n.grad.size() != n.value.size()) throw std::logic_error("gradient not computed for node");
        return n.grad;
    }

    /// Propagates d(loss)/d(node) to every node that requires a gradient.
    void backward(Var loss) {
        if (loss.tape() != this || loss.id() >= nodes_.size())
            throw std::logic_error("backward: loss is not recorded on this tape (forward pass missing)");
        Node& root = nodes_[loss.id()];
        if (root.value.size() != 1)
            throw ShapeError("backward", {root.value.shape()}, "loss must be scalar");
        if (!root.requires_grad) throw std::logic_error("backward: loss does not depend on any trainable input");
        for (auto& n : nodes_) n.grad = Tensor();
        grad_buffer(loss.id())[0] = 1.0;
        for (std::size_t id = loss.id() + 1; id-- > 0;) {
            Node& n = nodes_[id];
            if (!n.requires_grad || !n.backward || n.grad.size() != n.value.size()) continue;
            n.backward(*this, id);
        }
        did_backward_ = true;
    }

    bool has_backward() const noexcept { return did_backward_; }

    FlopCounter* counter() const noexcept { return counter_; }
    FlopTerm flop_term() const noexcept { return term_; }
    void set_flop_term(FlopTerm t) noexcept { term_ = t; }

    void charge(std::uint64_t n) {
        if (counter_) counter_->add(term_, n);
    }

    /// Records a computed value. `fn` is dropped when no parent needs a gradient.
    Var push(Tensor value, std::vector<std::size_t> parents, BackwardFn fn, const char* op) {
        if (!value.all_finite())
            throw NumericError(std::string(op) + ": non-finite value in output of shape " +
                               shape_str(value.shape()));
        bool rg = false;
        if (record_grads_)
            for (auto p : parents) rg = rg || nodes_.at(p).requires_grad;
        Node n;
        n.value = std::move(value);
        n.parents = std::move(parents);
        n.requires_grad = rg;
        if (rg) n.backward = std::move(fn);
        n.op = op;
        nodes_.push_back(std::move(n));
        return Var(this, nodes_.size() - 1);
    }

private:
    Var push_leaf(Tensor value, bool requires_grad, const char* op) {
        if (!value.all_finite()) throw NumericError(std::string(op) + ": non-finite leaf value");
        Node n;
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        n.op = op;
        nodes_.push_back(std::move(n));
        return Var(this, nodes_.size() - 1);
    }

    std::deque<Node> nodes_;
    std::map<std::string, std::size_t> bound_;
    FlopCounter* counter_ = nullptr;
    FlopTerm term_ = FlopTerm::Elementwise;
    bool record_grads_ = true;
    bool did_backward_ = false;
};

inline const Tensor& Var::value() const { return tape_->node(id_).value; }
inline const Shape& Var::shape() const { return tape_->node(id_).value.shape(); }
inline bool Var::requires_grad() const { return tape_->node(id_).requires_grad; }

/// Selects the FLOP bucket for ops recorded while in scope.
class FlopScope {
public:
    FlopScope(Tape& tape, FlopTerm term) : tape_(tape), saved_(tape.flop_term()) { tape.set_flop_term(term); }
    ~FlopScope() { tape_.set_flop_term(saved_); }
    FlopScope(const FlopScope&) = delete;
    FlopScope& operator=(const FlopScope&) = delete;

private:
    Tape& tape_;
    FlopTerm saved_;
};

/// Runs backward on `loss` and writes d(loss)/d(param) into every trainable
/// parameter's gradient slot. Trainable parameters the loss does not touch
/// receive zeros; non-trainable parameters are left as they were.
inline void backward(Var loss, ParamSet& params) {
    Tape& tape = *loss.tape();
    tape.backward(loss);
    for (auto& [name, p] : params) {
        if (!p.trainable) continue;
        auto it = tape.bound_params().find(name);
        const Tape::Node* n = it == tape.bound_params().end() ? nullptr : &tape.node(it->second);
        if (n && n->grad.size() == n->value.size())
            p.grad = n->grad;
        else
            p.grad = Tensor(p.value.shape(), 0.0);
    }
}

}  // namespace agsl
