#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vitfreeze/schedule.hpp"

using namespace vitfreeze;

namespace {

// distance in representable doubles, for tight closed-form comparisons
int64_t ulp_distance(double a, double b) {
    if (a == b) return 0;
    int64_t ia, ib;
    static_assert(sizeof(double) == sizeof(int64_t));
    std::memcpy(&ia, &a, 8);
    std::memcpy(&ib, &b, 8);
    if ((ia < 0) != (ib < 0)) return std::numeric_limits<int64_t>::max();
    return std::llabs(ia - ib);
}

}  // namespace

TEST_CASE("cubic spacing cubes the linearly spaced fractions") {
    auto t = compute_freeze_times(2, 0.5, Spacing::kCubic);
    REQUIRE(t.size() == 2);
    CHECK(ulp_distance(t[0], 0.125) <= 4);
    CHECK(t[1] == 1.0);

    auto t5 = compute_freeze_times(5, 0.8, Spacing::kCubic);
    REQUIRE(t5.size() == 5);
    CHECK(ulp_distance(t5[0], 0.512) <= 4);
    CHECK(t5[4] == 1.0);
    // interior values are cubes of the linear grid 0.8, 0.85, 0.9, 0.95, 1
    CHECK(ulp_distance(t5[1], 0.85 * 0.85 * 0.85) <= 4);
    CHECK(ulp_distance(t5[2], 0.9 * 0.9 * 0.9) <= 4);
    CHECK(ulp_distance(t5[3], 0.95 * 0.95 * 0.95) <= 4);
}

TEST_CASE("linear spacing is uniform from t0 to 1") {
    auto t = compute_freeze_times(3, 0.5, Spacing::kLinear);
    REQUIRE(t.size() == 3);
    CHECK(t[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(t[1] == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(t[2] == 1.0);
}

TEST_CASE("freeze times are non-decreasing and end at exactly 1") {
    for (double t0 : {0.3, 0.5, 0.8, 1.0}) {
        for (auto sp : {Spacing::kLinear, Spacing::kCubic}) {
            auto t = compute_freeze_times(13, t0, sp);
            REQUIRE(t.size() == 13);
            for (size_t i = 1; i < t.size(); ++i) CHECK(t[i] >= t[i - 1]);
            CHECK(t.back() == 1.0);
        }
    }
}

TEST_CASE("scaled initial rates satisfy alpha0 * t_i == alpha exactly") {
    const double alpha = 1.5e-2;
    auto t = compute_freeze_times(13, 0.8, Spacing::kCubic);
    for (double ti : t) {
        double a0 = initial_lr(alpha, ti, LrScaling::kScaled);
        CHECK(ulp_distance(a0 * ti, alpha) <= 2);
    }
    CHECK(initial_lr(alpha, 0.5, LrScaling::kUnscaled) == alpha);
}

TEST_CASE("every scaled layer's rate curve has the same area at zero warm-up") {
    ScheduleConfig cfg;
    cfg.num_layers = 13;
    cfg.t0 = 0.8;
    cfg.spacing = Spacing::kCubic;
    cfg.lr_scaling = LrScaling::kScaled;
    cfg.base_lr = 1.5e-2;
    cfg.warmup_fraction = 0.0;
    auto s = make_layer_schedule(cfg);
    const double expect = cfg.base_lr / 2.0;  // integral of a0/2*(1+cos) over [0,t_i]
    for (int l = 0; l < s.num_layers(); ++l) {
        double area = lr_curve_integral(s, l);
        CHECK(std::abs(area - expect) / expect < 1e-6);
    }
}

TEST_CASE("unscaled curves have areas proportional to their freeze times") {
    ScheduleConfig cfg;
    cfg.num_layers = 4;
    cfg.t0 = 0.5;
    cfg.spacing = Spacing::kLinear;
    cfg.lr_scaling = LrScaling::kUnscaled;
    cfg.base_lr = 1e-2;
    cfg.warmup_fraction = 0.0;
    auto s = make_layer_schedule(cfg);
    for (int l = 0; l < s.num_layers(); ++l) {
        double area = lr_curve_integral(s, l);
        double expect = cfg.base_lr * s.t_freeze[static_cast<size_t>(l)] / 2.0;
        CHECK(std::abs(area - expect) / expect < 1e-6);
    }
}

TEST_CASE("warm-up ramps linearly then hands off to a cosine that hits zero") {
    ScheduleConfig cfg;
    cfg.num_layers = 5;
    cfg.t0 = 0.8;
    cfg.warmup_fraction = 0.10;
    auto s = make_layer_schedule(cfg);
    const double a0 = s.alpha0[0];
    const double ti = s.t_freeze[0];

    CHECK(lr_at(s, 0, 0.0) == 0.0);
    CHECK(lr_at(s, 0, 0.05) == doctest::Approx(0.5 * a0).epsilon(1e-12));
    CHECK(lr_at(s, 0, 0.10) == doctest::Approx(a0).epsilon(1e-12));
    // cosine midpoint of [w, t_i]
    double mid = 0.10 + (ti - 0.10) / 2.0;
    CHECK(lr_at(s, 0, mid) == doctest::Approx(0.5 * a0).epsilon(1e-12));
    CHECK(lr_at(s, 0, ti) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(lr_at(s, 0, ti + 1e-9) == 0.0);
    CHECK(lr_at(s, 0, 1.0) == 0.0);

    // monotone decrease on the cosine stretch
    double prev = lr_at(s, 0, 0.10);
    for (int i = 1; i <= 50; ++i) {
        double t = 0.10 + (ti - 0.10) * i / 50.0;
        double cur = lr_at(s, 0, t);
        CHECK(cur <= prev + 1e-15);
        prev = cur;
    }
}

TEST_CASE("zero warm-up reduces to the plain half-cosine") {
    ScheduleConfig cfg;
    cfg.num_layers = 3;
    cfg.t0 = 0.5;
    cfg.spacing = Spacing::kLinear;
    cfg.warmup_fraction = 0.0;
    auto s = make_layer_schedule(cfg);
    for (int l = 0; l < 3; ++l) {
        double a0 = s.alpha0[static_cast<size_t>(l)];
        double ti = s.t_freeze[static_cast<size_t>(l)];
        for (double frac : {0.0, 0.25, 0.5, 0.75}) {
            double t = ti * frac;
            double expect = 0.5 * a0 * (1.0 + std::cos(M_PI * t / ti));
            CHECK(lr_at(s, l, t) == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("decoder rate uses the full horizon and never freezes") {
    const double alpha = 2e-3;
    CHECK(decoder_lr_at(alpha, 0.1, 0.05) == doctest::Approx(0.5 * alpha).epsilon(1e-12));
    CHECK(decoder_lr_at(alpha, 0.1, 0.1) == doctest::Approx(alpha).epsilon(1e-12));
    CHECK(decoder_lr_at(alpha, 0.1, 0.55) == doctest::Approx(0.5 * alpha).epsilon(1e-12));
    CHECK(decoder_lr_at(alpha, 0.1, 1.0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(decoder_lr_at(alpha, 0.0, 0.5) == doctest::Approx(0.5 * alpha).epsilon(1e-12));
}

TEST_CASE("freeze steps land on the first step whose fraction reaches t_i") {
    CHECK(freeze_step(1.0, 500) == 500);
    CHECK(freeze_step(0.5, 500) == 250);
    CHECK(freeze_step(0.5005, 500) == 251);
    // 0.8^3 * 500 is exactly 256 in real arithmetic; rounding noise in the
    // product must not push it to 257
    CHECK(freeze_step(0.8 * 0.8 * 0.8, 500) == 256);
    // toy ladder: 0.85^3, 0.9^3, 0.95^3 over 500 steps
    CHECK(freeze_step(0.85 * 0.85 * 0.85, 500) == 308);
    CHECK(freeze_step(0.9 * 0.9 * 0.9, 500) == 365);
    CHECK(freeze_step(0.95 * 0.95 * 0.95, 500) == 429);
    // tiny fractions clamp up to the first step
    CHECK(freeze_step(1e-9, 500) == 1);
}

TEST_CASE("event tracker reports each layer once, in order, at its step") {
    ScheduleConfig cfg;
    cfg.num_layers = 5;
    cfg.t0 = 0.8;
    cfg.total_steps = 500;
    auto s = make_layer_schedule(cfg);
    FreezeEventTracker tracker(s, cfg.total_steps);

    CHECK(tracker.step_of(0) == 256);
    CHECK(tracker.step_of(4) == 500);

    std::vector<std::pair<int, int64_t>> fired;
    for (int64_t step = 1; step <= 500; ++step) {
        for (int layer : tracker.poll(step)) fired.push_back({layer, step});
    }
    REQUIRE(fired.size() == 5);
    std::vector<int64_t> expect_steps{256, 308, 365, 429, 500};
    for (size_t i = 0; i < fired.size(); ++i) {
        CHECK(fired[i].first == static_cast<int>(i));
        CHECK(fired[i].second == expect_steps[i]);
    }
    // polling past the end yields nothing further
    CHECK(tracker.poll(501).empty());
}

TEST_CASE("tracker catches up when several freeze times pass in one poll") {
    ScheduleConfig cfg;
    cfg.num_layers = 5;
    cfg.t0 = 0.8;
    cfg.total_steps = 500;
    auto s = make_layer_schedule(cfg);
    FreezeEventTracker tracker(s, cfg.total_steps);
    auto layers = tracker.poll(400);
    REQUIRE(layers.size() == 3);
    CHECK(layers == std::vector<int>{0, 1, 2});
}

TEST_CASE("schedule CSV has one header plus points rows per layer") {
    ScheduleConfig cfg;
    cfg.num_layers = 3;
    cfg.t0 = 0.5;
    auto s = make_layer_schedule(cfg);
    std::ostringstream os;
    export_schedule_csv(s, os, 100);
    const std::string text = os.str();
    size_t lines = 0;
    for (char ch : text) lines += ch == '\n';
    CHECK(lines == 1 + 3 * 100);
    CHECK(text.rfind("layer,t_freeze,alpha0,step,lr", 0) == 0);
}

TEST_CASE("schedule SVG is deterministic and well formed") {
    ScheduleConfig cfg;
    cfg.num_layers = 4;
    auto s = make_layer_schedule(cfg);
    std::ostringstream a, b;
    export_schedule_svg(s, a, 200);
    export_schedule_svg(s, b, 200);
    CHECK(a.str() == b.str());
    CHECK(a.str().rfind("<svg", 0) == 0);
    CHECK(a.str().find("</svg>") != std::string::npos);
}

TEST_CASE("schedule config validation rejects out-of-range values") {
    ScheduleConfig cfg;
    cfg.t0 = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.t0 = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.t0 = 0.8;
    cfg.num_layers = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.num_layers = 13;
    cfg.warmup_fraction = 0.9;  // must stay below the first freeze time
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
