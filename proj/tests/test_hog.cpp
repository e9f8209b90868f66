#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "vitfreeze/hog.hpp"
#include "vitfreeze/rng.hpp"

using namespace vitfreeze;

namespace {

// Brute-force oracle: same documented conventions, written as straight
// nested loops over precomputed gradient fields rather than the streaming
// single pass the library uses.
Tensor hog_oracle(const Tensor& img, int64_t cell, const HogConfig& cfg, bool normalize) {
    const int64_t c = img.shape[0], h = img.shape[1], w = img.shape[2];
    const int64_t bins = cfg.num_bins;
    auto at = [&](int64_t k, int64_t i, int64_t j) {
        if (i < 0) i = 0;
        if (i >= h) i = h - 1;
        if (j < 0) j = 0;
        if (j >= w) j = w - 1;
        return img.data[static_cast<size_t>((k * h + i) * w + j)];
    };
    std::vector<double> gx(static_cast<size_t>(c * h * w)), gy(gx.size());
    for (int64_t k = 0; k < c; ++k) {
        for (int64_t i = 0; i < h; ++i) {
            for (int64_t j = 0; j < w; ++j) {
                gx[static_cast<size_t>((k * h + i) * w + j)] = at(k, i, j + 1) - at(k, i, j - 1);
                gy[static_cast<size_t>((k * h + i) * w + j)] = at(k, i + 1, j) - at(k, i - 1, j);
            }
        }
    }
    Tensor out({bins, h / cell, w / cell});
    const int64_t cw = w / cell;
    auto vote = [&](int64_t ci, int64_t cj, double dx, double dy) {
        const double mag = std::sqrt(dx * dx + dy * dy);
        if (mag == 0.0) return;
        double theta = std::atan2(dy, dx);
        if (theta < 0.0) theta += M_PI;
        if (theta >= M_PI) theta -= M_PI;
        const double pos = theta * static_cast<double>(bins) / M_PI;
        const int64_t b0 = static_cast<int64_t>(pos) % bins;
        const int64_t b1 = (b0 + 1) % bins;
        const double f = pos - std::floor(pos);
        out.data[static_cast<size_t>((b0 * (h / cell) + ci) * cw + cj)] += mag * (1.0 - f);
        out.data[static_cast<size_t>((b1 * (h / cell) + ci) * cw + cj)] += mag * f;
    };
    for (int64_t i = 0; i < h; ++i) {
        for (int64_t j = 0; j < w; ++j) {
            if (cfg.channel_rule == HogChannelRule::kSumChannels) {
                for (int64_t k = 0; k < c; ++k) {
                    vote(i / cell, j / cell, gx[static_cast<size_t>((k * h + i) * w + j)],
                         gy[static_cast<size_t>((k * h + i) * w + j)]);
                }
            } else {
                int64_t best = 0;
                double best_mag = -1.0;
                for (int64_t k = 0; k < c; ++k) {
                    const double dx = gx[static_cast<size_t>((k * h + i) * w + j)];
                    const double dy = gy[static_cast<size_t>((k * h + i) * w + j)];
                    const double mag = std::sqrt(dx * dx + dy * dy);
                    if (mag > best_mag) {
                        best_mag = mag;
                        best = k;
                    }
                }
                vote(i / cell, j / cell, gx[static_cast<size_t>((best * h + i) * w + j)],
                     gy[static_cast<size_t>((best * h + i) * w + j)]);
            }
        }
    }
    if (normalize) {
        const int64_t cells = (h / cell) * cw;
        for (int64_t cidx = 0; cidx < cells; ++cidx) {
            double n2 = 0.0;
            for (int64_t b = 0; b < bins; ++b) {
                double v = out.data[static_cast<size_t>(b * cells + cidx)];
                n2 += v * v;
            }
            const double inv = 1.0 / std::sqrt(n2 + cfg.eps * cfg.eps);
            for (int64_t b = 0; b < bins; ++b) {
                out.data[static_cast<size_t>(b * cells + cidx)] *= inv;
            }
        }
    }
    return out;
}

Tensor random_image(uint64_t seed, int64_t c, int64_t h, int64_t w) {
    Tensor img({c, h, w});
    Rng rng(seed);
    for (auto& v : img.data) v = rng.uniform();
    return img;
}

}  // namespace

TEST_CASE("descriptor matches the brute-force oracle on random images") {
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        Tensor img = random_image(seed, 3, 16, 16);
        for (auto rule : {HogChannelRule::kMaxChannel, HogChannelRule::kSumChannels}) {
            HogConfig cfg;
            cfg.channel_rule = rule;
            for (bool norm : {true, false}) {
                Tensor got = hog_features(img, 4, cfg, norm);
                Tensor want = hog_oracle(img, 4, cfg, norm);
                REQUIRE(got.shape == want.shape);
                for (size_t i = 0; i < got.data.size(); ++i) {
                    CHECK(std::abs(got.data[i] - want.data[i]) <= 1e-9);
                }
            }
        }
    }
}

TEST_CASE("a constant image yields an all-zero descriptor") {
    Tensor img = Tensor::full({3, 8, 8}, 0.42);
    HogConfig cfg;
    Tensor feat = hog_features(img, 4, cfg, false);
    for (double v : feat.data) CHECK(v == 0.0);
    // normalization of a zero histogram stays zero (soft eps, no division blowup)
    Tensor featn = hog_features(img, 4, cfg, true);
    for (double v : featn.data) CHECK(v == 0.0);
}

TEST_CASE("a vertical step edge puts all mass in the horizontal-gradient bin") {
    Tensor img({1, 4, 4});
    for (int64_t i = 0; i < 4; ++i) {
        for (int64_t j = 0; j < 4; ++j) {
            img.data[static_cast<size_t>(i * 4 + j)] = j >= 2 ? 1.0 : 0.0;
        }
    }
    HogConfig cfg;
    Tensor feat = hog_features(img, 4, cfg, false);
    CHECK(feat.shape == Shape{9, 1, 1});
    // gx = 1 at the two columns straddling the edge, gy = 0 -> theta 0
    CHECK(feat.data[0] == doctest::Approx(8.0).epsilon(1e-12));
    for (int64_t b = 1; b < 9; ++b) CHECK(feat.data[static_cast<size_t>(b)] == 0.0);
}

TEST_CASE("a horizontal edge splits evenly when pi/2 falls between bin centers") {
    Tensor img({1, 4, 4});
    for (int64_t i = 0; i < 4; ++i) {
        for (int64_t j = 0; j < 4; ++j) {
            img.data[static_cast<size_t>(i * 4 + j)] = i >= 2 ? 1.0 : 0.0;
        }
    }
    HogConfig cfg;  // 9 bins: pi/2 sits exactly mid-way between centers 4 and 5
    Tensor feat = hog_features(img, 4, cfg, false);
    CHECK(feat.data[4] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(feat.data[5] == doctest::Approx(4.0).epsilon(1e-12));
    double rest = 0.0;
    for (int64_t b = 0; b < 9; ++b) {
        if (b != 4 && b != 5) rest += feat.data[static_cast<size_t>(b)];
    }
    CHECK(rest == 0.0);
}

TEST_CASE("unnormalized histogram mass equals total voted gradient magnitude") {
    Tensor img = random_image(77, 3, 16, 16);
    HogConfig cfg;
    cfg.channel_rule = HogChannelRule::kSumChannels;
    Tensor feat = hog_features(img, 4, cfg, false);
    double hist_mass = 0.0;
    for (double v : feat.data) hist_mass += v;

    double grad_mass = 0.0;
    const int64_t c = 3, h = 16, w = 16;
    auto at = [&](int64_t k, int64_t i, int64_t j) {
        if (i < 0) i = 0;
        if (i >= h) i = h - 1;
        if (j < 0) j = 0;
        if (j >= w) j = w - 1;
        return img.data[static_cast<size_t>((k * h + i) * w + j)];
    };
    for (int64_t k = 0; k < c; ++k) {
        for (int64_t i = 0; i < h; ++i) {
            for (int64_t j = 0; j < w; ++j) {
                grad_mass += std::hypot(at(k, i, j + 1) - at(k, i, j - 1),
                                        at(k, i + 1, j) - at(k, i - 1, j));
            }
        }
    }
    CHECK(hist_mass == doctest::Approx(grad_mass).epsilon(1e-12));
}

TEST_CASE("identical texture in different cells yields identical cell histograms") {
    // constant background with the same 3x3 bump stamped into two cells
    Tensor img = Tensor::full({1, 16, 16}, 0.5);
    auto stamp = [&](int64_t oi, int64_t oj) {
        const double bump[3][3] = {{0.1, 0.9, 0.2}, {0.7, 0.4, 0.8}, {0.3, 0.6, 0.05}};
        for (int64_t i = 0; i < 3; ++i) {
            for (int64_t j = 0; j < 3; ++j) {
                img.data[static_cast<size_t>((oi + i) * 16 + oj + j)] = bump[i][j];
            }
        }
    };
    // top-left corner of cell (1,1) and of cell (2,2): both stamps sit well
    // inside the image, so their gradient neighborhoods are exact translates
    stamp(1 * 4, 1 * 4);
    stamp(2 * 4, 2 * 4);
    HogConfig cfg;
    Tensor feat = hog_features(img, 4, cfg, true);
    const int64_t cells = 4 * 4;
    for (int64_t b = 0; b < 9; ++b) {
        const double a = feat.data[static_cast<size_t>(b * cells + 1 * 4 + 1)];
        const double bb = feat.data[static_cast<size_t>(b * cells + 2 * 4 + 2)];
        CHECK(a == doctest::Approx(bb).epsilon(1e-12));
    }
}

TEST_CASE("channel rules differ when channels disagree on orientation") {
    // channel 0: weak vertical edge (horizontal gradient); channel 1: strong
    // horizontal edge (vertical gradient)
    Tensor img({2, 4, 4});
    for (int64_t i = 0; i < 4; ++i) {
        for (int64_t j = 0; j < 4; ++j) {
            img.data[static_cast<size_t>(i * 4 + j)] = j >= 2 ? 0.1 : 0.0;
            img.data[static_cast<size_t>(16 + i * 4 + j)] = i >= 2 ? 1.0 : 0.0;
        }
    }
    HogConfig max_cfg;
    max_cfg.channel_rule = HogChannelRule::kMaxChannel;
    Tensor max_feat = hog_features(img, 4, max_cfg, false);
    // the strong channel's orientation carries full mass; the weak channel
    // only votes on the rows where the strong gradient is silent (2 rows x
    // 2 edge columns x 0.1)
    CHECK(max_feat.data[0] == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(max_feat.data[4] + max_feat.data[5] == doctest::Approx(8.0).epsilon(1e-12));

    HogConfig sum_cfg;
    sum_cfg.channel_rule = HogChannelRule::kSumChannels;
    Tensor sum_feat = hog_features(img, 4, sum_cfg, false);
    // every channel votes everywhere: all 8 edge-column pixels x 0.1
    CHECK(sum_feat.data[0] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(sum_feat.data[4] + sum_feat.data[5] == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("per-cell normalization bounds the descriptor norm by one") {
    Tensor img = random_image(5, 3, 16, 16);
    HogConfig cfg;
    Tensor feat = hog_features(img, 4, cfg, true);
    const int64_t cells = 4 * 4;
    for (int64_t cidx = 0; cidx < cells; ++cidx) {
        double n2 = 0.0;
        for (int64_t b = 0; b < 9; ++b) {
            double v = feat.data[static_cast<size_t>(b * cells + cidx)];
            n2 += v * v;
        }
        CHECK(n2 <= 1.0 + 1e-12);
        CHECK(n2 > 0.5);  // random texture: eps is negligible
    }
}

TEST_CASE("target builder keys maps by scale and collapses duplicates") {
    Tensor img = random_image(9, 3, 64, 64);
    HogConfig cfg;
    SupervisionTarget t = build_targets(img, {16, 8, 8, 4}, cfg);
    CHECK(t.per_scale.size() == 3);
    CHECK(t.per_scale.at(16).shape == Shape{9, 16, 16});
    CHECK(t.per_scale.at(8).shape == Shape{9, 8, 8});
    CHECK(t.per_scale.at(4).shape == Shape{9, 4, 4});
    // each map equals a direct call at the matching cell size
    for (int64_t s : {16ll, 8ll, 4ll}) {
        Tensor direct = hog_features(img, 64 / s, cfg);
        CHECK(t.per_scale.at(s).data == direct.data);
    }
    CHECK_THROWS_AS(build_targets(img, {5}, cfg), ConfigError);
}

TEST_CASE("descriptor rejects bad shapes and bins") {
    HogConfig cfg;
    Tensor flat({16, 16});
    CHECK_THROWS_AS(hog_features(flat, 4, cfg), ShapeError);
    Tensor img = random_image(1, 1, 16, 16);
    CHECK_THROWS_AS(hog_features(img, 5, cfg), ShapeError);
    HogConfig bad;
    bad.num_bins = 1;
    CHECK_THROWS_AS(hog_features(img, 4, bad), ConfigError);
}
