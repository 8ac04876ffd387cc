#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>

#include "bridgelab/param.hpp"

namespace bridgelab {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Per-parameter first/second moment buffers plus the shared step count.
// The state also remembers every parameter name it has ever updated; the
// pipeline uses that census to prove only the bridge weights moved.
class AdamState {
  public:
    int64_t step_count() const { return t_; }
    const std::set<std::string>& touched() const { return touched_; }

    friend void adam_step(ParamStore& params, const GradMap& grads, AdamState& state,
                          const AdamConfig& cfg);

  private:
    struct Moments {
        Tensor m, v;
    };
    std::map<std::string, Moments> moments_;
    std::set<std::string> touched_;
    int64_t t_ = 0;
};

// One bias-corrected Adam update. Gradients may cover any subset of the
// trainable parameters; a gradient for a frozen or unknown parameter is a
// hard error (that would be a freezing leak, never a soft no-op).
void adam_step(ParamStore& params, const GradMap& grads, AdamState& state,
               const AdamConfig& cfg);

} // namespace bridgelab
