#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "vitfreeze/errors.hpp"

namespace vitfreeze {

enum class Spacing { kLinear, kCubic };
enum class LrScaling { kScaled, kUnscaled };

struct ScheduleConfig {
    int num_layers = 13;  // encoder freeze units: patch embedding + blocks
    double t0 = 0.8;      // first-layer freeze fraction, before any cubing
    Spacing spacing = Spacing::kCubic;
    LrScaling lr_scaling = LrScaling::kScaled;
    double base_lr = 1.5e-2;        // per-layer curves derive from this
    double warmup_fraction = 0.10;  // linear ramp length, fraction of training
    int64_t total_steps = 500;

    void validate() const;
};

// Freeze fractions per layer.  Linear spacing places them uniformly on
// [t0, 1]; cubic then cubes each value, which pulls early layers' freeze
// times down and concentrates the remaining budget on later layers.
std::vector<double> compute_freeze_times(int num_layers, double t0, Spacing spacing);

// Initial learning rate for a layer freezing at t_i.  Scaled mode divides by
// t_i so that every layer's LR curve has the same area (alpha/2 at zero
// warm-up); unscaled gives all layers the same starting rate.
double initial_lr(double alpha, double t_i, LrScaling scaling);

struct LayerSchedule {
    std::vector<double> t_freeze;  // per layer, non-decreasing, last == 1
    std::vector<double> alpha0;    // per layer initial LR
    double warmup = 0.0;           // ramp end, must be < min t_freeze
    int num_layers() const { return static_cast<int>(t_freeze.size()); }
};

LayerSchedule make_layer_schedule(const ScheduleConfig& cfg);

// LR at normalized training progress t in [0,1]:
//   t < w          linear ramp to alpha0
//   w <= t < t_i   cosine half-period, re-phased over [w, t_i] so the curve
//                  still reaches exactly 0 at the freeze time
//   t >= t_i       0 (frozen)
double lr_at(const LayerSchedule& s, int layer, double t);

// Decoder parameters never freeze: same ramp + cosine with t_i = 1.
double decoder_lr_at(double alpha, double warmup, double t);

// Trapezoid quadrature of lr_at over [0,1].
double lr_curve_integral(const LayerSchedule& s, int layer, int points = 20001);

// Integer step at which layer i freezes: the first step s with t_i <= s/T.
int64_t freeze_step(double t_i, int64_t total_steps);

// Stateful emitter: poll(s) returns the layers whose freeze time has been
// reached by step s and not yet reported, in ascending order.
class FreezeEventTracker {
public:
    FreezeEventTracker(const LayerSchedule& s, int64_t total_steps);
    std::vector<int> poll(int64_t step);
    int64_t step_of(int layer) const { return steps_[static_cast<size_t>(layer)]; }

private:
    std::vector<int64_t> steps_;
    int next_ = 0;
};

// CSV with header layer,t_freeze,alpha0,step,lr — `points` samples per layer
// on a uniform grid over [0,1].
void export_schedule_csv(const LayerSchedule& s, std::ostream& os, int points = 1000);
// Standalone SVG line plot of the same curves (no timestamps, fully
// deterministic output).
void export_schedule_svg(const LayerSchedule& s, std::ostream& os, int points = 1000);

}  // namespace vitfreeze
