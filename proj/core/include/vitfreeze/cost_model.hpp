#pragma once

#include <cstdint>
#include <vector>

#include "vitfreeze/model.hpp"
#include "vitfreeze/schedule.hpp"

namespace vitfreeze {

// Analytic flop counts for one training iteration, split by freeze unit and
// decoder head.  Backward cost is modeled as a multiple of forward cost
// (default 2x), so a trainable unit costs (1 + backward_multiple) * forward
// and a frozen unit costs forward only (it still runs in inference mode).
struct ModelProfile {
    std::vector<double> unit_forward_flops;  // [num_units], patch embedding first
    std::vector<double> head_forward_flops;  // [num_heads]
    std::vector<int> head_taps;              // [num_heads]
    double backward_multiple = 2.0;

    int num_units() const { return static_cast<int>(unit_forward_flops.size()); }
    int num_heads() const { return static_cast<int>(head_forward_flops.size()); }
};

// Flop profile for a model processing `batch` images per iteration.  Encoder
// costs are counted over the visible tokens only; decoders run on the full
// token grid after mask-token infill.
ModelProfile build_profile(const ModelConfig& cfg, int64_t batch);

// Work of one iteration in a given live state.  Encoder units run only up to
// the deepest tap with a living head (nothing above it is consumed); frozen
// units contribute forward cost only; every living head trains (forward +
// backward).  With no heads at all the encoder runs end to end (plain
// supervised-style accounting, used by the hand-check examples).
double iteration_work(const ModelProfile& p, int frozen_prefix,
                      const std::vector<bool>& head_alive);

// Work with nothing frozen and every head alive.
double full_work(const ModelProfile& p);

// Predicted total-work ratio of a freezing schedule vs. never freezing:
// sum_s work(s) / (T * full_work).  The per-step state replays the freeze
// steps ceil(t_i * T) and prunes each head one step after the unit at its tap
// freezes, exactly as the training loop does.
double predict_speedup(const ModelProfile& p, const ScheduleConfig& sched);

// Analytic profile + measured iteration times.  The ring keeps the most
// recent wall-clock samples for cheap median/variance queries; cumulative
// work integrates the analytic per-iteration cost actually executed.
class CostMeter {
public:
    explicit CostMeter(ModelProfile profile, size_t ring_capacity = 256);

    const ModelProfile& profile() const { return profile_; }
    double work_for(int frozen_prefix, const std::vector<bool>& head_alive) const {
        return iteration_work(profile_, frozen_prefix, head_alive);
    }
    double full_iteration_work() const { return full_work(profile_); }

    void record(double wall_ms, double work);
    double cumulative_work() const { return cumulative_work_; }
    int64_t iterations() const { return iterations_; }
    std::vector<double> recent_times() const;  // oldest first
    double median_recent() const;              // 0 when empty

private:
    ModelProfile profile_;
    size_t capacity_;
    std::vector<double> ring_;
    size_t next_ = 0;
    bool wrapped_ = false;
    double cumulative_work_ = 0.0;
    int64_t iterations_ = 0;
};

}  // namespace vitfreeze
