#pragma once

#include <functional>
#include <string>
#include <vector>

#include "bridgelab/graph.hpp"

namespace bridgelab {

// The builder constructs a scalar loss on a fresh graph. It must close over
// live Parameter objects (via Graph::param) so that perturbing a weight and
// rebuilding re-evaluates the loss at the new point.
using LossBuilder = std::function<ValueId(Graph&)>;

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    int64_t worst_coord = -1;
    int coords_checked = 0;
};

// Central-difference check of analytic gradients, relative error per
// coordinate: |analytic - cd| / max(|analytic|, |cd|, 1e-8). Large tensors
// are subsampled deterministically. Frozen parameters in the list are
// skipped (they have no analytic gradient by contract). A builder that
// disagrees with itself across two identical evaluations is an error.
GradCheckReport grad_check(const LossBuilder& build, std::vector<Parameter*> params,
                           double eps = 5e-3, int max_coords_per_param = 24,
                           uint64_t seed = 1234);

} // namespace bridgelab
