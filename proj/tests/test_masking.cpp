#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "vitfreeze/masking.hpp"

using namespace vitfreeze;

TEST_CASE("mask counts follow the ratio by rounding") {
    CHECK(sample_mask(1, 64, 0.75).m == 48);
    CHECK(sample_mask(1, 64, 0.5).m == 32);
    CHECK(sample_mask(1, 196, 0.75).m == 147);
    CHECK(sample_mask(1, 10, 0.649).m == 6);
    CHECK(sample_mask(1, 10, 0.651).m == 7);
}

TEST_CASE("masked and visible partition the index range, both ascending") {
    MaskPlan p = sample_mask(99, 64, 0.75);
    CHECK(p.n == 64);
    CHECK(p.m == 48);
    CHECK(p.masked.size() == 48);
    CHECK(p.visible.size() == 16);
    CHECK(std::is_sorted(p.masked.begin(), p.masked.end()));
    CHECK(std::is_sorted(p.visible.begin(), p.visible.end()));
    std::set<int64_t> all(p.masked.begin(), p.masked.end());
    all.insert(p.visible.begin(), p.visible.end());
    CHECK(all.size() == 64);
    CHECK(*all.begin() == 0);
    CHECK(*all.rbegin() == 63);
}

TEST_CASE("the same seed reproduces the same plan; different seeds differ") {
    MaskPlan a = sample_mask(1234, 64, 0.75);
    MaskPlan b = sample_mask(1234, 64, 0.75);
    CHECK(a.masked == b.masked);
    CHECK(a.visible == b.visible);
    MaskPlan c = sample_mask(1235, 64, 0.75);
    CHECK(a.masked != c.masked);
}

TEST_CASE("each patch is masked at roughly the target rate across seeds") {
    const int64_t n = 64;
    const double r = 0.75;
    const int trials = 4000;
    std::vector<int> hits(static_cast<size_t>(n), 0);
    for (int t = 0; t < trials; ++t) {
        MaskPlan p = sample_mask(static_cast<uint64_t>(t) * 7919 + 13, n, r);
        for (int64_t i : p.masked) hits[static_cast<size_t>(i)]++;
    }
    for (int64_t i = 0; i < n; ++i) {
        double rate = static_cast<double>(hits[static_cast<size_t>(i)]) / trials;
        CHECK(std::abs(rate - r) < 0.02);
    }
}

TEST_CASE("broadcast to a finer scale yields a boolean map with r*s^2 mass") {
    const int64_t g = 8;
    MaskPlan p = sample_mask(7, g * g, 0.75);
    for (int64_t s : {8ll, 16ll, 32ll}) {
        Tensor m = p.mask_at_scale(g, s);
        CHECK(m.shape == Shape{s, s});
        double total = 0.0;
        for (double v : m.data) {
            CHECK((v == 0.0 || v == 1.0));
            total += v;
        }
        CHECK(total == doctest::Approx(0.75 * static_cast<double>(s * s)).epsilon(1e-12));
    }
}

TEST_CASE("finer-scale map replicates each patch over its block") {
    const int64_t g = 4;
    MaskPlan p = sample_mask(3, g * g, 0.5);
    Tensor fine = p.mask_at_scale(g, 8);  // 2x2 block per patch
    Tensor base = p.mask_at_scale(g, 4);
    for (int64_t y = 0; y < 8; ++y) {
        for (int64_t x = 0; x < 8; ++x) {
            double expect = base.data[static_cast<size_t>((y / 2) * 4 + x / 2)];
            CHECK(fine.data[static_cast<size_t>(y * 8 + x)] == expect);
        }
    }
}

TEST_CASE("coarser scale carries fractional masked coverage, preserving mass") {
    const int64_t g = 8;
    MaskPlan p = sample_mask(17, g * g, 0.75);
    Tensor coarse = p.mask_at_scale(g, 4);  // each cell covers 4 patches
    CHECK(coarse.shape == Shape{4, 4});
    double total = 0.0;
    for (double v : coarse.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        // fractions are quarters of the 2x2 patch block
        CHECK(std::round(v * 4.0) == doctest::Approx(v * 4.0).epsilon(1e-12));
        total += v;
    }
    CHECK(total == doctest::Approx(0.75 * 16.0).epsilon(1e-12));

    // cell value equals the average of the covered patch-mask entries
    Tensor base = p.mask_at_scale(g, 8);
    for (int64_t y = 0; y < 4; ++y) {
        for (int64_t x = 0; x < 4; ++x) {
            double mean = 0.0;
            for (int64_t dy = 0; dy < 2; ++dy) {
                for (int64_t dx = 0; dx < 2; ++dx) {
                    mean += base.data[static_cast<size_t>((2 * y + dy) * 8 + (2 * x + dx))];
                }
            }
            mean /= 4.0;
            CHECK(coarse.data[static_cast<size_t>(y * 4 + x)] ==
                  doctest::Approx(mean).epsilon(1e-12));
        }
    }
}

TEST_CASE("mask ratio outside (0,1) is rejected") {
    CHECK_THROWS_AS(sample_mask(1, 64, 0.0), ConfigError);
    CHECK_THROWS_AS(sample_mask(1, 64, 1.0), ConfigError);
    CHECK_THROWS_AS(sample_mask(1, 64, -0.5), ConfigError);
    CHECK_THROWS_AS(sample_mask(1, 64, 1.5), ConfigError);
    CHECK_THROWS_AS(sample_mask(1, 0, 0.75), ConfigError);
}

TEST_CASE("scale must be reachable from the grid by doubling or halving") {
    MaskPlan p = sample_mask(5, 64, 0.75);
    CHECK_THROWS_AS(p.mask_at_scale(8, 3), ShapeError);
    CHECK_THROWS_AS(p.mask_at_scale(8, 12), ShapeError);
    CHECK_THROWS_AS(p.mask_at_scale(8, 0), ShapeError);
}
