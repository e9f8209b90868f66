#include "vitfreeze/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vitfreeze/rng.hpp"

namespace vitfreeze {

MaskPlan sample_mask(uint64_t rng_seed, int64_t n, double r) {
    if (!(r > 0.0 && r < 1.0)) {
        throw ConfigError("mask_ratio must be in (0,1), got " + std::to_string(r));
    }
    if (n < 2) throw ConfigError("sample_mask: need at least 2 patches");
    MaskPlan p;
    p.n = n;
    p.m = std::llround(r * static_cast<double>(n));
    p.rng_seed = rng_seed;

    std::vector<int64_t> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(rng_seed);
    rng.shuffle(perm);

    p.masked.assign(perm.begin(), perm.begin() + p.m);
    p.visible.assign(perm.begin() + p.m, perm.end());
    std::sort(p.masked.begin(), p.masked.end());
    std::sort(p.visible.begin(), p.visible.end());
    return p;
}

Tensor MaskPlan::mask_at_scale(int64_t g, int64_t scale) const {
    require(g * g == n, "mask_at_scale: grid " + std::to_string(g) + "^2 != patch count " +
                            std::to_string(n));
    require(scale >= 1, "mask_at_scale: bad scale");
    std::vector<double> patch(static_cast<size_t>(n), 0.0);
    for (int64_t i : masked) patch[static_cast<size_t>(i)] = 1.0;

    Tensor out({scale, scale});
    if (scale >= g) {
        require(scale % g == 0, "mask_at_scale: scale " + std::to_string(scale) +
                                    " not a multiple of grid " + std::to_string(g));
        const int64_t f = scale / g;
        for (int64_t i = 0; i < scale; ++i) {
            for (int64_t j = 0; j < scale; ++j) {
                out.data[static_cast<size_t>(i * scale + j)] =
                    patch[static_cast<size_t>((i / f) * g + (j / f))];
            }
        }
    } else {
        require(g % scale == 0, "mask_at_scale: grid " + std::to_string(g) +
                                    " not a multiple of scale " + std::to_string(scale));
        const int64_t f = g / scale;
        const double inv = 1.0 / static_cast<double>(f * f);
        for (int64_t i = 0; i < scale; ++i) {
            for (int64_t j = 0; j < scale; ++j) {
                double acc = 0.0;
                for (int64_t di = 0; di < f; ++di) {
                    for (int64_t dj = 0; dj < f; ++dj) {
                        acc += patch[static_cast<size_t>((i * f + di) * g + (j * f + dj))];
                    }
                }
                out.data[static_cast<size_t>(i * scale + j)] = acc * inv;
            }
        }
    }
    return out;
}

}  // namespace vitfreeze
