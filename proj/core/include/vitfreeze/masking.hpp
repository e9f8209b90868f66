#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "vitfreeze/tensor.hpp"

namespace vitfreeze {

// Random patch-masking plan for one image.  Per-scale masks are derived from
// the patch-level mask:
//  - scale >= token grid: each patch's value broadcasts to the (s/g)^2
//    positions it covers — boolean 0/1 maps;
//  - scale < token grid: one position covers (g/s)^2 patches, and carries
//    the fraction of them that are masked.  This keeps the total masked
//    weight at every scale exactly r·s² (loss terms stay comparably scaled)
//    at the price of fractional weights at coarse scales.
struct MaskPlan {
    int64_t n = 0;  // patch count
    int64_t m = 0;  // masked count = round(r * n)
    std::vector<int64_t> masked;   // ascending
    std::vector<int64_t> visible;  // ascending
    uint64_t rng_seed = 0;

    // grid_side x grid_side patch grid resampled to scale x scale.
    Tensor mask_at_scale(int64_t grid_side, int64_t scale) const;
};

MaskPlan sample_mask(uint64_t rng_seed, int64_t n, double r);

}  // namespace vitfreeze
