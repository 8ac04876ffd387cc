#include "bridgelab/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace bridgelab {

void adam_step(ParamStore& params, const GradMap& grads, AdamState& state,
               const AdamConfig& cfg) {
    state.t_ += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t_));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t_));

    for (const auto& [name, g] : grads) {
        if (!params.has(name))
            throw std::runtime_error("adam_step: gradient for unknown parameter " + name);
        Parameter& p = params.get(name);
        if (!p.trainable)
            throw std::runtime_error("adam_step: gradient for frozen parameter " + name);
        if (!p.value.same_shape(g))
            throw std::runtime_error("adam_step: gradient shape mismatch for " + name);
        check_finite(g, "gradient of " + name);

        auto [it, fresh] = state.moments_.try_emplace(name);
        if (fresh) {
            it->second.m = Tensor(p.value.shape, std::vector<float>(p.value.data.size(), 0.0f));
            it->second.v = Tensor(p.value.shape, std::vector<float>(p.value.data.size(), 0.0f));
        }
        state.touched_.insert(name);

        float* w = p.value.data.data();
        float* m = it->second.m.data.data();
        float* v = it->second.v.data.data();
        const float* gd = g.data.data();
        const int64_t n = p.value.numel();
        for (int64_t i = 0; i < n; ++i) {
            const double gi = gd[i];
            const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            w[i] = static_cast<float>(w[i] - cfg.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps));
        }
    }
}

} // namespace bridgelab
