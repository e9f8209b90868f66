#include "vitfreeze/reports.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace vitfreeze {

namespace fs = std::filesystem;
using nlohmann::json;

void ensure_writable_dir(const std::string& dir) {
    if (dir.empty()) throw IoError("output directory is empty; pass --out");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
    const fs::path probe = fs::path(dir) / ".write_probe";
    {
        std::ofstream p(probe, std::ios::binary);
        p << "ok";
        if (!p) throw IoError("output directory is not writable: " + dir);
    }
    fs::remove(probe, ec);
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write file: " + path);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("failed writing file: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string trace_to_csv(const TrainReport& rep) {
    std::ostringstream os;
    os << "step,loss,iter_ms,frozen_prefix,alive_heads\n";
    char buf[64];
    for (size_t i = 0; i < rep.loss_trace.size(); ++i) {
        os << (i + 1) << ",";
        std::snprintf(buf, sizeof(buf), "%.17g", rep.loss_trace[i]);
        os << buf << ",";
        std::snprintf(buf, sizeof(buf), "%.3f", rep.iter_ms[i]);
        os << buf << "," << rep.frozen_prefix_trace[i] << "," << rep.alive_heads_trace[i] << "\n";
    }
    return os.str();
}

std::string events_to_csv(const TrainReport& rep) {
    std::ostringstream os;
    os << "event,index,tap,step\n";
    for (const auto& e : rep.freeze_events) {
        os << "freeze," << e.layer << ",," << e.step << "\n";
    }
    for (const auto& e : rep.prune_events) {
        os << "prune," << e.head << "," << e.tap << "," << e.step << "\n";
    }
    return os.str();
}

std::string report_to_json(const RunConfig& cfg, const TrainReport& rep) {
    json root;
    root["steps_completed"] = rep.steps_completed;
    root["aborted"] = rep.aborted;
    if (rep.abort) {
        json a;
        a["step"] = rep.abort->step;
        a["loss"] = rep.abort->loss;
        a["message"] = rep.abort->message;
        a["unit_lrs"] = rep.abort->unit_lrs;
        a["decoder_lr"] = rep.abort->decoder_lr;
        json terms = json::object();
        for (const auto& [tap, v] : rep.abort->loss_terms) terms[std::to_string(tap)] = v;
        a["loss_terms"] = terms;
        root["abort"] = a;
    }
    root["loss_trace"] = rep.loss_trace;
    json fe = json::array();
    for (const auto& e : rep.freeze_events) fe.push_back({{"layer", e.layer}, {"step", e.step}});
    root["freeze_events"] = fe;
    json pe = json::array();
    for (const auto& e : rep.prune_events) {
        pe.push_back({{"head", e.head}, {"tap", e.tap}, {"step", e.step}});
    }
    root["prune_events"] = pe;
    root["work"] = {{"predicted_ratio", rep.predicted_work_ratio},
                    {"executed_ratio", rep.executed_work_ratio},
                    {"executed_flops", rep.executed_work},
                    {"full_run_flops", rep.full_run_work}};
    if (cfg.trainer.measure && !rep.iter_ms.empty()) {
        // Phase summary: contiguous spans of constant (frozen prefix, alive
        // heads) with their median iteration times.
        json phases = json::array();
        const size_t n = rep.iter_ms.size();
        size_t begin = 0;
        while (begin < n) {
            size_t end = begin + 1;
            while (end < n &&
                   rep.frozen_prefix_trace[end] == rep.frozen_prefix_trace[begin] &&
                   rep.alive_heads_trace[end] == rep.alive_heads_trace[begin]) {
                ++end;
            }
            std::vector<double> v(rep.iter_ms.begin() + static_cast<int64_t>(begin),
                                  rep.iter_ms.begin() + static_cast<int64_t>(end));
            std::sort(v.begin(), v.end());
            const double med =
                v.size() % 2 == 1 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
            phases.push_back({{"first_step", begin + 1},
                              {"last_step", end},
                              {"frozen_prefix", rep.frozen_prefix_trace[begin]},
                              {"alive_heads", rep.alive_heads_trace[begin]},
                              {"median_iter_ms", med}});
            begin = end;
        }
        root["timing"] = {{"phases", phases}};
    }
    return root.dump(2) + "\n";
}

void write_run_outputs(const RunConfig& cfg, const LayerSchedule& sched, const TrainReport& rep,
                       const std::string& outdir) {
    ensure_writable_dir(outdir);
    const fs::path base(outdir);
    write_text_file((base / "config.json").string(), config_to_json(cfg));
    {
        std::ostringstream os;
        export_schedule_csv(sched, os);
        write_text_file((base / "schedule.csv").string(), os.str());
    }
    {
        std::ostringstream os;
        export_schedule_svg(sched, os);
        write_text_file((base / "schedule.svg").string(), os.str());
    }
    write_text_file((base / "trace.csv").string(), trace_to_csv(rep));
    write_text_file((base / "events.csv").string(), events_to_csv(rep));
    write_text_file((base / "report.json").string(), report_to_json(cfg, rep));
}

}  // namespace vitfreeze
