#pragma once

#include <string>

#include "vitfreeze/config.hpp"
#include "vitfreeze/trainer.hpp"

namespace vitfreeze {

// Creates the directory (and parents) if needed and proves it is writable by
// creating and removing a probe file; throws IoError otherwise.  Called
// before any long-running work so a bad --out fails fast.
void ensure_writable_dir(const std::string& dir);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

// Serializations (pure, deterministic byte-for-byte given equal inputs).
std::string trace_to_csv(const TrainReport& rep);
std::string events_to_csv(const TrainReport& rep);
std::string report_to_json(const RunConfig& cfg, const TrainReport& rep);

// config.json, schedule.csv, schedule.svg, trace.csv, events.csv,
// report.json in `outdir`.
void write_run_outputs(const RunConfig& cfg, const LayerSchedule& sched, const TrainReport& rep,
                       const std::string& outdir);

}  // namespace vitfreeze
