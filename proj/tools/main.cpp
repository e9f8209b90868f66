// Batch front end: train / schedule / predict-speedup / grad-check, all
// driven by a JSON config plus a handful of flags.  Unattended by design —
// results land in --out as CSV/SVG/JSON.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "vitfreeze/checkpoint.hpp"
#include "vitfreeze/config.hpp"
#include "vitfreeze/cost_model.hpp"
#include "vitfreeze/dataset.hpp"
#include "vitfreeze/gradcheck.hpp"
#include "vitfreeze/reports.hpp"
#include "vitfreeze/rng.hpp"
#include "vitfreeze/trainer.hpp"

namespace {

using namespace vitfreeze;

constexpr int kExitError = 1;
constexpr int kExitCheckFailed = 2;
constexpr int kExitAborted = 3;  // training died on a non-finite loss

// Measured end-to-end reduction for the full-scale reference configuration,
// reported next to our analytic prediction for comparison.
constexpr double kFullScaleReferenceReductionPercent = 12.5;

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::string preset;
    std::optional<uint64_t> seed;
};

RunConfig resolve_config(const CommonArgs& a) {
    RunConfig cfg;
    if (!a.config_path.empty()) {
        std::string text = read_text_file(a.config_path);
        if (!a.preset.empty()) {
            // --preset overrides the file's base; its sections still apply.
            nlohmann::json root = nlohmann::json::parse(text, nullptr, false);
            if (root.is_discarded() || !root.is_object()) {
                throw ConfigError(a.config_path + ": invalid JSON config");
            }
            root["preset"] = a.preset;
            text = root.dump();
        }
        cfg = parse_config_text(text, a.config_path);
    } else {
        cfg = preset_config(a.preset.empty() ? "vit-toy" : a.preset);
        cfg.validate();
    }
    if (a.seed) cfg.trainer.seed = *a.seed;
    if (!a.out_dir.empty()) cfg.out_dir = a.out_dir;
    return cfg;
}

std::vector<Tensor> load_dataset(const RunConfig& cfg) {
    if (cfg.data.source == "synthetic") {
        return synth_dataset(derive_seed(cfg.trainer.seed, 0xda7aull), cfg.data.count,
                             cfg.model.channels, cfg.model.image_size, cfg.model.image_size);
    }
    std::vector<Tensor> imgs = load_image_dir(cfg.data.path);
    const Shape expect{cfg.model.channels, cfg.model.image_size, cfg.model.image_size};
    if (imgs.front().shape != expect) {
        throw ConfigError("images in " + cfg.data.path + " are " +
                          shape_str(imgs.front().shape) + " but the model expects " +
                          shape_str(expect));
    }
    return imgs;
}

int cmd_train(const CommonArgs& a) {
    RunConfig cfg = resolve_config(a);
    if (cfg.out_dir.empty()) throw ConfigError("train needs an output directory (--out)");
    ensure_writable_dir(cfg.out_dir);

    std::vector<Tensor> images = load_dataset(cfg);
    std::vector<PreparedImage> prepared = prepare_images(
        images, cfg.model.patch_size, cfg.model.supervision_scales, cfg.model.hog);
    images.clear();

    Trainer trainer(cfg, std::move(prepared));
    std::cout << "training: " << cfg.trainer.steps << " steps, batch " << cfg.trainer.batch_size
              << ", " << cfg.schedule.num_layers << " freeze units, seed " << cfg.trainer.seed
              << "\n";
    TrainReport rep = trainer.run();

    write_run_outputs(cfg, trainer.schedule(), rep, cfg.out_dir);
    write_checkpoint(trainer.model(),
                     (std::filesystem::path(cfg.out_dir) / "model.vtfz").string());

    if (rep.aborted) {
        std::cerr << "ABORTED at step " << rep.abort->step << ": " << rep.abort->message
                  << " (loss=" << rep.abort->loss << ")\n";
        for (const auto& [tap, v] : rep.abort->loss_terms) {
            std::cerr << "  loss term at tap " << tap << ": " << v << "\n";
        }
        for (size_t u = 0; u < rep.abort->unit_lrs.size(); ++u) {
            std::cerr << "  unit " << u << " lr: " << rep.abort->unit_lrs[u] << "\n";
        }
        std::cerr << "  decoder lr: " << rep.abort->decoder_lr << "\n";
        return kExitAborted;
    }
    std::cout << "done: " << rep.steps_completed << " steps, final loss "
              << (rep.loss_trace.empty() ? 0.0 : rep.loss_trace.back()) << ", "
              << rep.freeze_events.size() << " freeze events, " << rep.prune_events.size()
              << " prune events\n"
              << "work ratio: predicted " << rep.predicted_work_ratio << ", executed "
              << rep.executed_work_ratio << "\n"
              << "outputs in " << cfg.out_dir << "\n";
    return 0;
}

int cmd_schedule(const CommonArgs& a) {
    RunConfig cfg = resolve_config(a);
    if (cfg.out_dir.empty()) throw ConfigError("schedule needs an output directory (--out)");
    ensure_writable_dir(cfg.out_dir);
    const LayerSchedule sched = cfg.build_schedule();
    const std::filesystem::path base(cfg.out_dir);
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
    std::cout << "schedule artifacts in " << cfg.out_dir << " (" << sched.num_layers()
              << " layers)\n";
    return 0;
}

int cmd_predict_speedup(const CommonArgs& a) {
    RunConfig cfg = resolve_config(a);
    if (cfg.out_dir.empty()) throw ConfigError("predict-speedup needs an output directory (--out)");
    ensure_writable_dir(cfg.out_dir);

    const ModelProfile profile = build_profile(cfg.model, cfg.trainer.batch_size);
    ScheduleConfig sc = cfg.schedule;
    sc.total_steps = cfg.trainer.steps;
    const double ratio = predict_speedup(profile, sc);
    const double reduction = (1.0 - ratio) * 100.0;

    nlohmann::json out;
    out["predicted_work_ratio"] = ratio;
    out["predicted_reduction_percent"] = reduction;
    out["full_iteration_flops"] = full_work(profile);
    out["reference"] = {
        {"configuration", "vit-b full scale"},
        {"measured_reduction_percent", kFullScaleReferenceReductionPercent},
        {"gap_percentage_points", reduction - kFullScaleReferenceReductionPercent},
        {"note", "analytic flop model vs. a wall-clock measurement on real hardware; "
                 "the gap is reported, not asserted"}};
    const std::filesystem::path base(cfg.out_dir);
    write_text_file((base / "config.json").string(), config_to_json(cfg));
    write_text_file((base / "speedup.json").string(), out.dump(2) + "\n");

    std::cout << "predicted work ratio " << ratio << " (" << reduction
              << "% reduction) for preset " << cfg.preset << "\n"
              << "reference full-scale measured reduction: "
              << kFullScaleReferenceReductionPercent << "%\n"
              << "details in " << (base / "speedup.json").string() << "\n";
    return 0;
}

int cmd_grad_check(const CommonArgs& a, int seeds) {
    GradCheckOptions opt;
    std::vector<GradCheckResult> rs = run_op_gradcheck_suite(seeds, opt);
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rs) {
        std::printf("%-28s %s  max_err=%.3e  coords=%lld\n", r.name.c_str(),
                    r.passed ? "pass" : "FAIL", r.max_err,
                    static_cast<long long>(r.coords_checked));
        arr.push_back({{"name", r.name},
                       {"passed", r.passed},
                       {"max_err", r.max_err},
                       {"coords_checked", r.coords_checked}});
    }
    const bool ok = all_passed(rs);
    std::printf("gradient check: %zu cases, %s\n", rs.size(), ok ? "all passed" : "FAILURES");
    if (!a.out_dir.empty()) {
        ensure_writable_dir(a.out_dir);
        nlohmann::json out{{"seeds", seeds}, {"all_passed", ok}, {"cases", arr}};
        write_text_file((std::filesystem::path(a.out_dir) / "gradcheck.json").string(),
                        out.dump(2) + "\n");
    }
    return ok ? 0 : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"progressive layer freezing for masked-image pretraining"};
    app.require_subcommand(1);

    CommonArgs args;
    int gc_seeds = 20;

    auto add_common = [&](CLI::App* sub, bool out_required) {
        sub->add_option("--config", args.config_path, "JSON config file")
            ->check(CLI::ExistingFile);
        auto* out = sub->add_option("--out", args.out_dir, "output directory");
        if (out_required) out->required();
        sub->add_option("--seed", args.seed, "override trainer.seed");
        sub->add_option("--preset", args.preset, "base preset: vit-toy or vit-b")
            ->check(CLI::IsMember({"vit-toy", "vit-b"}));
    };

    CLI::App* train = app.add_subcommand("train", "run one training schedule");
    add_common(train, true);
    CLI::App* schedule =
        app.add_subcommand("schedule", "emit schedule CSV/SVG without training");
    add_common(schedule, true);
    CLI::App* predict =
        app.add_subcommand("predict-speedup", "analytic cost model only");
    add_common(predict, true);
    CLI::App* gradcheck =
        app.add_subcommand("grad-check", "finite-difference gradient suite");
    add_common(gradcheck, false);
    gradcheck->add_option("--seeds", gc_seeds, "random seeds per op family")
        ->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(args);
        if (schedule->parsed()) return cmd_schedule(args);
        if (predict->parsed()) return cmd_predict_speedup(args);
        if (gradcheck->parsed()) return cmd_grad_check(args, gc_seeds);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitError;
}
