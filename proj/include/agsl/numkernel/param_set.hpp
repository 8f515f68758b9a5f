#pragma once

#include <map>
#include <stdexcept>
#include <string>

#include "agsl/numkernel/tensor.hpp"

namespace agsl {

struct Param {
    Tensor value;
    Tensor grad;
    bool trainable = true;
};

/// Named parameter collection. Ordered by name so iteration (and hence
/// optimiser updates and serialisation) is deterministic.
class ParamSet {
public:
    void add(const std::string& name, Tensor value, bool trainable = true) {
        if (params_.contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
        Tensor grad(value.shape(), 0.0);
        params_.emplace(name, Param{std::move(value), std::move(grad), trainable});
    }

    bool contains(const std::string& name) const { return params_.contains(name); }

    Param& at(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
        return it->second;
    }
    const Param& at(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
        return it->second;
    }

    Tensor& value(const std::string& name) { return at(name).value; }
    const Tensor& value(const std::string& name) const { return at(name).value; }
    const Tensor& grad(const std::string& name) const { return at(name).grad; }

    void set_trainable(const std::string& name, bool trainable) { at(name).trainable = trainable; }

    void zero_grad() {
        for (auto& [_, p] : params_)
            if (p.trainable) p.grad.fill(0.0);
    }

    std::size_t size() const { return params_.size(); }
    std::size_t numel() const {
        std::size_t n = 0;
        for (const auto& [_, p] : params_) n += p.value.size();
        return n;
    }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    friend bool operator==(const ParamSet& a, const ParamSet& b) {
        if (a.params_.size() != b.params_.size()) return false;
        for (const auto& [name, p] : a.params_) {
            auto it = b.params_.find(name);
            if (it == b.params_.end() || it->second.value != p.value || it->second.trainable != p.trainable)
                return false;
        }
        return true;
    }

private:
    std::map<std::string, Param> params_;
};

}  // namespace agsl
