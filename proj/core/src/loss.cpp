#include "vitfreeze/loss.hpp"

namespace vitfreeze {

LossResult local_mim_loss(Exec& ex, const std::vector<ScaleLossInput>& inputs) {
    LossResult res;
    if (inputs.empty()) {
        res.total = ex.constant(Tensor({1}));
        res.empty = true;
        return res;
    }
    bool have_total = false;
    Val total;
    for (const ScaleLossInput& in : inputs) {
        if (in.pred.t().shape != in.target.shape || in.pred.t().shape != in.mask.shape) {
            throw ShapeError("local_mim_loss: tap " + std::to_string(in.tap) +
                             " shapes disagree: pred " + shape_str(in.pred.t().shape) +
                             ", target " + shape_str(in.target.shape) + ", mask " +
                             shape_str(in.mask.shape));
        }
        if (in.mask_count <= 0.0) {
            // nothing masked at this scale; the term is identically zero
            res.per_tap_terms[in.tap] = 0.0;
            continue;
        }
        Val diff = ex.sub(in.pred, ex.constant(in.target));
        Val masked_sq = ex.mul(ex.constant(in.mask), ex.mul(diff, diff));
        Val term = ex.scale(ex.sum_all(masked_sq), 0.5 * in.weight / in.mask_count);
        res.per_tap_terms[in.tap] = term.t().data[0];
        total = have_total ? ex.add(total, term) : term;
        have_total = true;
    }
    if (!have_total) {
        res.total = ex.constant(Tensor({1}));
        res.value = 0.0;
        return res;
    }
    res.total = total;
    res.value = total.t().data[0];
    return res;
}

}  // namespace vitfreeze
