#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vitfreeze/hog.hpp"
#include "vitfreeze/tensor.hpp"

namespace vitfreeze {

// Procedural training images: oriented gradients, bars, and soft blobs at
// mixed angles and frequencies, pixels in [0,1].  Structure at many
// orientations keeps gradient-histogram targets non-degenerate.
Tensor synth_image(uint64_t seed, int64_t channels, int64_t height, int64_t width);
std::vector<Tensor> synth_dataset(uint64_t seed, int64_t count, int64_t channels, int64_t height,
                                  int64_t width);

// Binary PPM (P6) codec — the only on-disk image format.  Values scale
// linearly between [0,255] bytes and [0,1] doubles.
Tensor load_ppm(const std::string& path);            // -> [3,H,W]
void write_ppm(const Tensor& image, const std::string& path);
// All images in lexicographic filename order; every file must decode to the
// same dimensions.
std::vector<Tensor> load_image_dir(const std::string& dir);

// Images with everything the training loop needs precomputed once: the
// patch matrix fed to the encoder and the per-scale reconstruction targets.
struct PreparedImage {
    Tensor patches;            // [N, P*P*C]
    SupervisionTarget targets; // per supervision scale
};

std::vector<PreparedImage> prepare_images(const std::vector<Tensor>& images, int64_t patch_size,
                                          const std::vector<int64_t>& scales,
                                          const HogConfig& hog);

}  // namespace vitfreeze
