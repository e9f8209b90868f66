#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "vitfreeze/config.hpp"
#include "vitfreeze/cost_model.hpp"
#include "vitfreeze/dataset.hpp"
#include "vitfreeze/model.hpp"
#include "vitfreeze/optimizer.hpp"

namespace vitfreeze {

struct FreezeEventLog {
    int layer = -1;
    int64_t step = -1;
};

struct PruneEventLog {
    int head = -1;
    int tap = -1;
    int64_t step = -1;
};

// Dump captured when a run dies on a non-finite loss: enough state to see
// which term and which learning rates were involved.
struct AbortDiagnostics {
    int64_t step = -1;
    double loss = 0.0;
    std::vector<double> unit_lrs;      // per freeze unit at the failing step
    double decoder_lr = 0.0;
    std::map<int, double> loss_terms;  // per tap, if the loss was assembled
    std::string message;
};

struct TrainReport {
    std::vector<double> loss_trace;           // per completed step
    std::vector<double> iter_ms;              // zeros unless trainer.measure
    std::vector<int> frozen_prefix_trace;     // state while the step ran
    std::vector<int> alive_heads_trace;
    std::vector<FreezeEventLog> freeze_events;
    std::vector<PruneEventLog> prune_events;
    int64_t steps_completed = 0;
    double predicted_work_ratio = 1.0;  // analytic, full schedule
    double executed_work = 0.0;         // analytic flops actually spent
    double full_run_work = 0.0;         // steps * never-freeze iteration work
    double executed_work_ratio = 1.0;
    bool aborted = false;
    std::optional<AbortDiagnostics> abort;
};

// Everything one optimization step consumes.  A pure function of
// (seed, step, dataset), so batches can be assembled ahead of time on worker
// threads without any effect on results.
struct StepBatch {
    int64_t step = 0;
    Tensor visible;  // [B, V, patch_dim]
    Tensor posemb;   // [B, V, D]
    std::vector<int64_t> vis_idx;   // flattened per-batch visible indices
    std::vector<int64_t> mask_idx;  // flattened per-batch masked indices
    struct HeadData {
        int head = -1;
        Tensor mask;    // [B, bins, s, s]
        Tensor target;  // [B, bins, s, s]
        double mask_count = 0.0;
    };
    std::vector<HeadData> heads;  // alive heads only, ascending index
};

// Per-step observation handed to the test/instrumentation hook before freeze
// and prune events are applied.
struct StepObservation {
    int64_t step = 0;
    double loss = 0.0;
    int frozen_prefix = 0;  // during the step
    int alive_heads = 0;
    const std::map<int, double>* loss_terms = nullptr;
    // trainable-parameter gradients, keyed by parameter identity
    const std::unordered_map<const Tensor*, const Tensor*>* grads = nullptr;
    const StepBatch* batch = nullptr;
};

// Orchestrates one training run: per-step batch/mask sampling, forward over
// the non-frozen region, multi-scale loss, backward truncated at the frozen
// boundary, per-layer learning rates, freeze + prune events, and cost
// metering.  Deterministic given (config, dataset): the env var
// VITFREEZE_THREADS only overlaps batch assembly with compute and never
// changes results (0 = fully single-threaded).
class Trainer {
public:
    Trainer(const RunConfig& cfg, std::vector<PreparedImage> data);

    TrainReport run();

    VitMimModel& model() { return model_; }
    const VitMimModel& model() const { return model_; }
    const RunConfig& config() const { return cfg_; }
    const CostMeter& meter() const { return meter_; }
    const LayerSchedule& schedule() const { return sched_; }
    AdamW& optimizer() { return opt_; }

    // Batch assembly for one step; pure, thread-safe, exposed for tests.
    StepBatch prepare_step(int64_t step) const;
    // Analytic schedule replay (matches what run() will do).
    int64_t freeze_step_of(int unit) const { return fsteps_[static_cast<size_t>(unit)]; }
    bool head_alive_at(int head, int64_t step) const;
    int frozen_prefix_at(int64_t step) const;

    // Optional observation callback, invoked once per completed step.
    std::function<void(const StepObservation&)> on_step;

private:
    struct StepOutcome {
        double loss = 0.0;
        bool ok = true;
        std::string error;
        std::map<int, double> loss_terms;
    };
    StepOutcome execute_step(int64_t step, const StepBatch& sb);

    RunConfig cfg_;
    std::vector<PreparedImage> data_;
    VitMimModel model_;
    LayerSchedule sched_;
    std::vector<int64_t> fsteps_;  // freeze step per unit
    AdamW opt_;
    CostMeter meter_;
    uint64_t batch_seed_ = 0;
    uint64_t mask_seed_ = 0;
};

// Wall-time ratio of a freezing run vs. a never-freeze baseline from their
// recorded per-iteration times: the run is split into phases of constant
// (frozen prefix, alive heads), each phase contributes its length times its
// median iteration time, and the baseline contributes steps times its single
// median.  The first `discard` iterations of each run are dropped (cache and
// allocator warm-up).
double measured_time_ratio(const TrainReport& run, const TrainReport& baseline,
                           int64_t discard = 10);

}  // namespace vitfreeze
