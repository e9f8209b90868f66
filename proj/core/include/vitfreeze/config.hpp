#pragma once

#include <cstdint>
#include <string>

#include "vitfreeze/model.hpp"
#include "vitfreeze/schedule.hpp"

namespace vitfreeze {

struct TrainerConfig {
    int64_t batch_size = 32;
    int64_t steps = 500;
    uint64_t seed = 42;
    std::string precision = "f64";  // the only supported mode; validated
    bool measure = false;  // true: record wall-clock per iteration (trace times
                           // then vary run to run; off for byte-stable reports)
    void validate() const;
};

struct DataConfig {
    std::string source = "synthetic";  // "synthetic" | "directory"
    int64_t count = 256;               // synthetic image count
    std::string path;                  // image directory for source=directory
    void validate() const;
};

// Everything one run needs, resolved from preset defaults + config file +
// command-line overrides.  schedule.total_steps always mirrors trainer.steps
// (single source of truth) and is not a config key of its own.
struct RunConfig {
    std::string preset = "vit-toy";
    ModelConfig model;
    ScheduleConfig schedule;
    TrainerConfig trainer;
    DataConfig data;
    std::string out_dir;

    // Linear batch-size rule: the configured base rate is stated for batch
    // 256 and scales to the actual batch.  Applied when curves are built,
    // never stored back, so the echoed config round-trips unchanged.
    double effective_lr() const {
        return schedule.base_lr * static_cast<double>(trainer.batch_size) / 256.0;
    }
    LayerSchedule build_schedule() const;

    void validate() const;
};

// Built-in configurations: "vit-toy" (64x64 images, 4 blocks, trains on a
// desk CPU) and "vit-b" (full-scale geometry for schedule/cost analysis).
RunConfig preset_config(const std::string& name);

// Strict parse: JSON object with optional sections model / schedule /
// trainer / data plus preset and out_dir.  Unknown keys and type mismatches
// are errors naming the offending key.  Values overlay the preset's
// defaults.
RunConfig parse_config_text(const std::string& text, const std::string& origin);
RunConfig parse_config(const std::string& path);

// Fully resolved config as pretty JSON; parsing it again reproduces the
// exact same RunConfig.
std::string config_to_json(const RunConfig& cfg);

}  // namespace vitfreeze
