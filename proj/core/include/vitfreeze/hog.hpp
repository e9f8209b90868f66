#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "vitfreeze/tensor.hpp"

namespace vitfreeze {

enum class HogChannelRule {
    kMaxChannel,   // per pixel, only the channel with the largest magnitude votes
    kSumChannels,  // every channel votes with its own orientation and magnitude
};

struct HogConfig {
    int64_t num_bins = 9;
    HogChannelRule channel_rule = HogChannelRule::kMaxChannel;
    double eps = 1e-6;  // per-cell L2 normalization: h / sqrt(|h|^2 + eps^2)
};

// Histogram-of-oriented-gradients descriptor used as the reconstruction
// target.  Conventions:
//  - centered [-1,0,1] gradients per channel, replicate border (a constant
//    image therefore yields an all-zero field);
//  - unsigned orientations over [0,pi), bin centers at k*pi/num_bins, votes
//    split linearly between the two adjacent centers with wrap-around;
//  - magnitudes accumulated per cell of cell_size x cell_size pixels;
//  - per-cell L2 normalization (skipped when normalize=false, which the
//    energy-conservation oracle relies on).
// image is [C,H,W]; result is [num_bins, H/cell, W/cell].
Tensor hog_features(const Tensor& image, int64_t cell_size, const HogConfig& cfg,
                    bool normalize = true);

// Per-scale HOG target maps: scale s uses cell size H/s and yields
// [num_bins, s, s].  Scales are keyed by value (duplicates collapse).
struct SupervisionTarget {
    std::map<int64_t, Tensor> per_scale;
};

SupervisionTarget build_targets(const Tensor& image, const std::vector<int64_t>& scales,
                                const HogConfig& cfg);

}  // namespace vitfreeze
