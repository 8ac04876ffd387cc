#pragma once

#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "bridgelab/tensor.hpp"

namespace bridgelab {

// Named model weight. Frozen parameters (trainable == false) must never be
// written by any training step; the pipeline checks this bitwise.
struct Parameter {
    std::string name;
    Tensor value;
    bool trainable = true;
};

// Owning collection of parameters with unique names. Iteration order is the
// name order (std::map), which keeps every consumer deterministic.
class ParamStore {
  public:
    Parameter& add(const std::string& name, Tensor value, bool trainable = true) {
        auto [it, fresh] = params_.emplace(name, Parameter{name, std::move(value), trainable});
        if (!fresh) throw std::runtime_error("duplicate parameter name: " + name);
        return it->second;
    }

    Parameter& get(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::runtime_error("unknown parameter: " + name);
        return it->second;
    }
    const Parameter& get(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::runtime_error("unknown parameter: " + name);
        return it->second;
    }
    bool has(const std::string& name) const { return params_.count(name) != 0; }

    void set_trainable(bool flag) {
        for (auto& [k, p] : params_) p.trainable = flag;
    }

    size_t size() const { return params_.size(); }
    int64_t scalar_count() const {
        int64_t n = 0;
        for (const auto& [k, p] : params_) n += p.value.numel();
        return n;
    }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

  private:
    std::map<std::string, Parameter> params_;
};

// Gradients keyed by parameter name; frozen parameters never appear.
using GradMap = std::map<std::string, Tensor>;

} // namespace bridgelab
