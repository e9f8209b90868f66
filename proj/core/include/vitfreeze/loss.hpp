#pragma once

#include <map>
#include <vector>

#include "vitfreeze/exec.hpp"

namespace vitfreeze {

// One decoder head's contribution to the reconstruction loss.
struct ScaleLossInput {
    int tap = 0;          // encoder block the head reads from (term identity)
    double weight = 1.0;  // w_l; all heads weighted equally by default
    Val pred;             // [B,bins,s,s]
    Tensor target;        // [B,bins,s,s], constant
    Tensor mask;          // [B,bins,s,s], constant, replicated across bins
    double mask_count = 0.0;  // total masked weight over batch x spatial (not x bins)
};

struct LossResult {
    Val total;                            // scalar
    double value = 0.0;
    std::map<int, double> per_tap_terms;  // tap -> its (weighted, normalized) term
    bool empty = false;                   // no alive heads: training is complete
};

// Gaussian log-likelihood reconstruction objective, constants dropped:
//   L = sum_l w_l * 0.5 * sum(mask_l * (pred_l - target_l)^2) / mask_count_l
// Masked positions only (mask weighting), each scale normalized by its own
// masked-position count so equal weights mean equal influence regardless of
// resolution.  An empty input list yields loss 0 with the `empty` flag set.
LossResult local_mim_loss(Exec& ex, const std::vector<ScaleLossInput>& inputs);

}  // namespace vitfreeze
