#include "bridgelab/gradcheck.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

#include "bridgelab/rng.hpp"

namespace bridgelab {

namespace {
// Finite differences run on the double-precision replay of the same tape;
// differencing the float32 loss would bury small gradients in rounding noise.
double eval_loss(const LossBuilder& build) {
    Graph g;
    ValueId loss = build(g);
    return g.replay_scalar_f64(loss);
}
} // namespace

GradCheckReport grad_check(const LossBuilder& build, std::vector<Parameter*> params, double eps,
                           int max_coords_per_param, uint64_t seed) {
    Graph g;
    ValueId loss_id = build(g);
    const double base = g.replay_scalar_f64(loss_id);
    GradMap analytic = g.backward(loss_id);

    const double replay = eval_loss(build);
    if (replay != base)
        throw std::runtime_error("grad_check: non-deterministic builder (loss " +
                                 std::to_string(base) + " vs " + std::to_string(replay) + ")");

    GradCheckReport report;
    RngStream rng(seed);
    for (Parameter* p : params) {
        if (!p->trainable) continue;
        auto it = analytic.find(p->name);
        const int64_t n = p->value.numel();

        std::vector<int64_t> coords;
        if (n <= max_coords_per_param) {
            for (int64_t i = 0; i < n; ++i) coords.push_back(i);
        } else {
            RngStream sub = rng.child(p->name);
            std::set<int64_t> seen;
            while (static_cast<int>(seen.size()) < max_coords_per_param)
                seen.insert(sub.uniform_int(static_cast<int>(n)));
            coords.assign(seen.begin(), seen.end());
        }

        for (int64_t i : coords) {
            float& w = p->value.data[i];
            const float saved = w;
            const float hi = static_cast<float>(double(saved) + eps);
            const float lo = static_cast<float>(double(saved) - eps);

            w = hi;
            const double lp = eval_loss(build);
            w = lo;
            const double lm = eval_loss(build);
            w = saved;

            const double denom = double(hi) - double(lo);
            const double cd = (lp - lm) / denom;
            const double an = (it == analytic.end()) ? 0.0 : double(it->second.data[i]);
            const double rel =
                std::abs(an - cd) / std::max({std::abs(an), std::abs(cd), 1e-8});
            ++report.coords_checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = p->name;
                report.worst_coord = i;
            }
        }
    }
    return report;
}

} // namespace bridgelab
