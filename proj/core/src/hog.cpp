#include "vitfreeze/hog.hpp"

#include <algorithm>
#include <cmath>

namespace vitfreeze {

namespace {

inline double pix(const double* ch, int64_t h, int64_t w, int64_t i, int64_t j) {
    i = std::clamp<int64_t>(i, 0, h - 1);  // replicate border
    j = std::clamp<int64_t>(j, 0, w - 1);
    return ch[i * w + j];
}

}  // namespace

Tensor hog_features(const Tensor& image, int64_t cell_size, const HogConfig& cfg, bool normalize) {
    if (image.rank() != 3) {
        throw ShapeError("hog_features: expected [C,H,W], got " + shape_str(image.shape));
    }
    const int64_t c = image.shape[0], h = image.shape[1], w = image.shape[2];
    if (cell_size < 1 || h % cell_size != 0 || w % cell_size != 0) {
        throw ShapeError("hog_features: cell size " + std::to_string(cell_size) +
                         " does not divide " + shape_str(image.shape));
    }
    if (cfg.num_bins < 2) throw ConfigError("hog: num_bins must be >= 2");
    const int64_t bins = cfg.num_bins;
    const int64_t ch_cells = h / cell_size, cw_cells = w / cell_size;
    const double bin_width = M_PI / static_cast<double>(bins);

    Tensor out({bins, ch_cells, cw_cells});
    auto vote = [&](int64_t ci, int64_t cj, double theta, double mag) {
        if (mag == 0.0) return;
        const double p = theta / bin_width;
        int64_t j0 = static_cast<int64_t>(std::floor(p));
        double frac = p - static_cast<double>(j0);
        j0 %= bins;  // theta < pi guarantees j0 in [0,bins); keep it safe anyway
        const int64_t j1 = (j0 + 1) % bins;
        out.data[static_cast<size_t>(j0 * ch_cells * cw_cells + ci * cw_cells + cj)] +=
            mag * (1.0 - frac);
        out.data[static_cast<size_t>(j1 * ch_cells * cw_cells + ci * cw_cells + cj)] += mag * frac;
    };

    for (int64_t i = 0; i < h; ++i) {
        const int64_t ci = i / cell_size;
        for (int64_t j = 0; j < w; ++j) {
            const int64_t cj = j / cell_size;
            double best_mag = -1.0, best_theta = 0.0;
            for (int64_t k = 0; k < c; ++k) {
                const double* chp = image.data.data() + k * h * w;
                const double gx = pix(chp, h, w, i, j + 1) - pix(chp, h, w, i, j - 1);
                const double gy = pix(chp, h, w, i + 1, j) - pix(chp, h, w, i - 1, j);
                const double mag = std::hypot(gx, gy);
                double theta = std::atan2(gy, gx);
                if (theta < 0.0) theta += M_PI;  // unsigned orientation
                if (theta >= M_PI) theta -= M_PI;
                if (cfg.channel_rule == HogChannelRule::kSumChannels) {
                    vote(ci, cj, theta, mag);
                } else if (mag > best_mag) {
                    best_mag = mag;
                    best_theta = theta;
                }
            }
            if (cfg.channel_rule == HogChannelRule::kMaxChannel) {
                vote(ci, cj, best_theta, best_mag);
            }
        }
    }

    if (normalize) {
        for (int64_t ci = 0; ci < ch_cells; ++ci) {
            for (int64_t cj = 0; cj < cw_cells; ++cj) {
                double norm2 = 0.0;
                for (int64_t b = 0; b < bins; ++b) {
                    const double v =
                        out.data[static_cast<size_t>(b * ch_cells * cw_cells + ci * cw_cells + cj)];
                    norm2 += v * v;
                }
                const double inv = 1.0 / std::sqrt(norm2 + cfg.eps * cfg.eps);
                for (int64_t b = 0; b < bins; ++b) {
                    out.data[static_cast<size_t>(b * ch_cells * cw_cells + ci * cw_cells + cj)] *=
                        inv;
                }
            }
        }
    }
    return out;
}

SupervisionTarget build_targets(const Tensor& image, const std::vector<int64_t>& scales,
                                const HogConfig& cfg) {
    if (image.rank() != 3) {
        throw ShapeError("build_targets: expected [C,H,W], got " + shape_str(image.shape));
    }
    const int64_t h = image.shape[1];
    SupervisionTarget t;
    for (int64_t s : scales) {
        if (s < 1 || h % s != 0) {
            throw ConfigError("build_targets: scale " + std::to_string(s) +
                              " does not divide image size " + std::to_string(h));
        }
        if (t.per_scale.count(s)) continue;  // duplicate scales share one map
        t.per_scale.emplace(s, hog_features(image, h / s, cfg));
    }
    return t;
}

}  // namespace vitfreeze
