#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vitfreeze/tape.hpp"

namespace vitfreeze {

// One gradient-check instance: a set of input tensors (perturbed in place)
// and a forward builder that recomputes the scalar loss from their current
// contents.  When run, the builder is called once on a recording tape for
// the analytic gradients, then twice per probed coordinate for the central
// finite difference.
struct GradCheckCase {
    std::string name;
    std::vector<Tensor> inputs;
    // Must leaf every tensor in `inputs` (in order) onto the tape, append
    // the resulting node ids to the vector, and return the loss node.
    std::function<NodeId(Tape&, std::vector<NodeId>&)> forward;
};

struct GradCheckResult {
    std::string name;
    double max_err = 0.0;       // worst |analytic - fd| / max(|a|+|fd|, floor)
    int64_t coords_checked = 0;
    bool passed = false;
};

struct GradCheckOptions {
    double h = 1e-5;            // central-difference step, scaled by max(1,|x|)
    double tol = 1e-4;
    double denom_floor = 1e-6;  // below this magnitude the error is absolute
    int64_t max_coords_per_tensor = -1;  // -1: check every coordinate
    uint64_t coord_seed = 0;    // sampling seed when coordinates are subsampled
};

GradCheckResult run_gradcheck(GradCheckCase& c, const GradCheckOptions& opt);

// Per-op suite: every differentiable op with random inputs over `num_seeds`
// seeds, plus small composite graphs (attention piece, MLP piece, frozen
// boundary).  One aggregated result per case family.
std::vector<GradCheckResult> run_op_gradcheck_suite(int num_seeds, const GradCheckOptions& opt);

bool all_passed(const std::vector<GradCheckResult>& rs);

}  // namespace vitfreeze
