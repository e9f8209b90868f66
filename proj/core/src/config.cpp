#include "vitfreeze/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace vitfreeze {

using nlohmann::json;

void TrainerConfig::validate() const {
    if (batch_size < 1) throw ConfigError("trainer.batch_size must be >= 1");
    if (steps < 1) throw ConfigError("trainer.steps must be >= 1");
    if (precision != "f64") {
        throw ConfigError("trainer.precision must be \"f64\" (the only supported mode), got \"" +
                          precision + "\"");
    }
}

void DataConfig::validate() const {
    if (source != "synthetic" && source != "directory") {
        throw ConfigError("data.source must be \"synthetic\" or \"directory\", got \"" + source +
                          "\"");
    }
    if (source == "synthetic" && count < 1) throw ConfigError("data.count must be >= 1");
    if (source == "directory" && path.empty()) {
        throw ConfigError("data.path is required when data.source is \"directory\"");
    }
}

LayerSchedule RunConfig::build_schedule() const {
    ScheduleConfig s = schedule;
    s.base_lr = effective_lr();
    s.total_steps = trainer.steps;
    return make_layer_schedule(s);
}

void RunConfig::validate() const {
    model.validate();
    trainer.validate();
    data.validate();
    ScheduleConfig s = schedule;
    s.total_steps = trainer.steps;  // mirrored field; keep in sync before checks
    s.validate();
    if (schedule.num_layers != model.num_units()) {
        throw ConfigError("schedule.num_layers (" + std::to_string(schedule.num_layers) +
                          ") must equal the model's freeze units, patch embedding + blocks (" +
                          std::to_string(model.num_units()) + ")");
    }
}

RunConfig preset_config(const std::string& name) {
    RunConfig cfg;  // defaults are the toy setup
    cfg.preset = name;
    if (name == "vit-toy") {
        cfg.schedule.num_layers = cfg.model.num_units();  // 5
        return cfg;
    }
    if (name == "vit-b") {
        cfg.model.image_size = 224;
        cfg.model.channels = 3;
        cfg.model.patch_size = 16;
        cfg.model.embed_dim = 768;
        cfg.model.num_blocks = 12;
        cfg.model.num_heads = 12;
        cfg.model.mlp_ratio = 4.0;
        cfg.model.tap_layers = {2, 4, 10, 12};
        cfg.model.supervision_scales = {56, 28, 14, 7};
        cfg.model.decoder_dim = 256;
        cfg.model.decoder_heads = 8;
        cfg.model.mask_ratio = 0.75;
        cfg.schedule.num_layers = cfg.model.num_units();  // 13
        cfg.trainer.batch_size = 8;  // full geometry on a CPU: keep steps cheap
        return cfg;
    }
    throw ConfigError("unknown preset \"" + name + "\" (expected vit-toy or vit-b)");
}

namespace {

void check_keys(const json& obj, const std::string& prefix, const std::set<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key())) {
            throw ConfigError("unknown config key \"" + prefix + it.key() + "\"");
        }
    }
}

std::string key_path(const std::string& prefix, const std::string& key) { return prefix + key; }

double as_num(const json& v, const std::string& where) {
    if (!v.is_number()) throw ConfigError("config key \"" + where + "\" must be a number");
    return v.get<double>();
}

int64_t as_int(const json& v, const std::string& where) {
    if (!v.is_number_integer()) throw ConfigError("config key \"" + where + "\" must be an integer");
    return v.get<int64_t>();
}

std::string as_str(const json& v, const std::string& where) {
    if (!v.is_string()) throw ConfigError("config key \"" + where + "\" must be a string");
    return v.get<std::string>();
}

bool as_bool(const json& v, const std::string& where) {
    if (!v.is_boolean()) throw ConfigError("config key \"" + where + "\" must be a boolean");
    return v.get<bool>();
}

template <typename T>
std::vector<T> as_int_list(const json& v, const std::string& where) {
    if (!v.is_array()) throw ConfigError("config key \"" + where + "\" must be an array");
    std::vector<T> out;
    for (const auto& e : v) {
        if (!e.is_number_integer()) {
            throw ConfigError("config key \"" + where + "\" must hold integers");
        }
        out.push_back(static_cast<T>(e.get<int64_t>()));
    }
    return out;
}

void apply_model(const json& o, const std::string& prefix, ModelConfig& m) {
    check_keys(o, prefix,
               {"image_size", "channels", "patch_size", "embed_dim", "num_blocks", "num_heads",
                "mlp_ratio", "tap_layers", "supervision_scales", "decoder_dim", "decoder_heads",
                "mask_ratio", "gelu", "ln_eps", "hog_bins", "hog_channel_rule", "hog_eps"});
    for (auto it = o.begin(); it != o.end(); ++it) {
        const std::string& k = it.key();
        const std::string where = key_path(prefix, k);
        const json& v = it.value();
        if (k == "image_size") m.image_size = as_int(v, where);
        else if (k == "channels") m.channels = as_int(v, where);
        else if (k == "patch_size") m.patch_size = as_int(v, where);
        else if (k == "embed_dim") m.embed_dim = as_int(v, where);
        else if (k == "num_blocks") m.num_blocks = static_cast<int>(as_int(v, where));
        else if (k == "num_heads") m.num_heads = static_cast<int>(as_int(v, where));
        else if (k == "mlp_ratio") m.mlp_ratio = as_num(v, where);
        else if (k == "tap_layers") m.tap_layers = as_int_list<int>(v, where);
        else if (k == "supervision_scales") m.supervision_scales = as_int_list<int64_t>(v, where);
        else if (k == "decoder_dim") m.decoder_dim = as_int(v, where);
        else if (k == "decoder_heads") m.decoder_heads = static_cast<int>(as_int(v, where));
        else if (k == "mask_ratio") m.mask_ratio = as_num(v, where);
        else if (k == "gelu") {
            const std::string s = as_str(v, where);
            if (s == "tanh") m.gelu_mode = ops::GeluMode::kTanh;
            else if (s == "erf") m.gelu_mode = ops::GeluMode::kErf;
            else throw ConfigError("config key \"" + where + "\" must be \"tanh\" or \"erf\"");
        } else if (k == "ln_eps") m.ln_eps = as_num(v, where);
        else if (k == "hog_bins") m.hog.num_bins = as_int(v, where);
        else if (k == "hog_channel_rule") {
            const std::string s = as_str(v, where);
            if (s == "max") m.hog.channel_rule = HogChannelRule::kMaxChannel;
            else if (s == "sum") m.hog.channel_rule = HogChannelRule::kSumChannels;
            else throw ConfigError("config key \"" + where + "\" must be \"max\" or \"sum\"");
        } else if (k == "hog_eps") m.hog.eps = as_num(v, where);
    }
}

void apply_schedule(const json& o, const std::string& prefix, ScheduleConfig& s) {
    check_keys(o, prefix,
               {"num_layers", "t0", "spacing", "lr_scaling", "base_lr", "warmup_fraction"});
    for (auto it = o.begin(); it != o.end(); ++it) {
        const std::string& k = it.key();
        const std::string where = key_path(prefix, k);
        const json& v = it.value();
        if (k == "num_layers") s.num_layers = static_cast<int>(as_int(v, where));
        else if (k == "t0") {
            s.t0 = as_num(v, where);
            if (!(s.t0 > 0.0 && s.t0 <= 1.0)) {
                throw ConfigError("config key \"" + where + "\" must satisfy t0 in (0,1]");
            }
        } else if (k == "spacing") {
            const std::string sp = as_str(v, where);
            if (sp == "cubic") s.spacing = Spacing::kCubic;
            else if (sp == "linear") s.spacing = Spacing::kLinear;
            else throw ConfigError("config key \"" + where + "\" must be \"cubic\" or \"linear\"");
        } else if (k == "lr_scaling") {
            const std::string sc = as_str(v, where);
            if (sc == "scaled") s.lr_scaling = LrScaling::kScaled;
            else if (sc == "unscaled") s.lr_scaling = LrScaling::kUnscaled;
            else throw ConfigError("config key \"" + where + "\" must be \"scaled\" or \"unscaled\"");
        } else if (k == "base_lr") s.base_lr = as_num(v, where);
        else if (k == "warmup_fraction") s.warmup_fraction = as_num(v, where);
    }
}

void apply_trainer(const json& o, const std::string& prefix, TrainerConfig& t) {
    check_keys(o, prefix, {"batch_size", "steps", "seed", "precision", "measure"});
    for (auto it = o.begin(); it != o.end(); ++it) {
        const std::string& k = it.key();
        const std::string where = key_path(prefix, k);
        const json& v = it.value();
        if (k == "batch_size") t.batch_size = as_int(v, where);
        else if (k == "steps") t.steps = as_int(v, where);
        else if (k == "seed") {
            if (!v.is_number_integer()) {
                throw ConfigError("config key \"" + where + "\" must be an integer");
            }
            t.seed = v.get<uint64_t>();
        } else if (k == "precision") t.precision = as_str(v, where);
        else if (k == "measure") t.measure = as_bool(v, where);
    }
}

void apply_data(const json& o, const std::string& prefix, DataConfig& d) {
    check_keys(o, prefix, {"source", "count", "path"});
    for (auto it = o.begin(); it != o.end(); ++it) {
        const std::string& k = it.key();
        const std::string where = key_path(prefix, k);
        const json& v = it.value();
        if (k == "source") d.source = as_str(v, where);
        else if (k == "count") d.count = as_int(v, where);
        else if (k == "path") d.path = as_str(v, where);
    }
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(origin + ": invalid JSON: " + e.what());
    }
    if (!root.is_object()) throw ConfigError(origin + ": config root must be a JSON object");
    check_keys(root, "", {"preset", "model", "schedule", "trainer", "data", "out_dir"});

    std::string preset = "vit-toy";
    if (root.contains("preset")) preset = as_str(root["preset"], "preset");
    RunConfig cfg = preset_config(preset);

    if (root.contains("model")) {
        if (!root["model"].is_object()) throw ConfigError("config key \"model\" must be an object");
        apply_model(root["model"], "model.", cfg.model);
    }
    if (root.contains("schedule")) {
        if (!root["schedule"].is_object()) {
            throw ConfigError("config key \"schedule\" must be an object");
        }
        apply_schedule(root["schedule"], "schedule.", cfg.schedule);
    }
    if (root.contains("trainer")) {
        if (!root["trainer"].is_object()) {
            throw ConfigError("config key \"trainer\" must be an object");
        }
        apply_trainer(root["trainer"], "trainer.", cfg.trainer);
    }
    if (root.contains("data")) {
        if (!root["data"].is_object()) throw ConfigError("config key \"data\" must be an object");
        apply_data(root["data"], "data.", cfg.data);
    }
    if (root.contains("out_dir")) cfg.out_dir = as_str(root["out_dir"], "out_dir");

    cfg.validate();
    return cfg;
}

RunConfig parse_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

std::string config_to_json(const RunConfig& cfg) {
    json m{{"image_size", cfg.model.image_size},
           {"channels", cfg.model.channels},
           {"patch_size", cfg.model.patch_size},
           {"embed_dim", cfg.model.embed_dim},
           {"num_blocks", cfg.model.num_blocks},
           {"num_heads", cfg.model.num_heads},
           {"mlp_ratio", cfg.model.mlp_ratio},
           {"tap_layers", cfg.model.tap_layers},
           {"supervision_scales", cfg.model.supervision_scales},
           {"decoder_dim", cfg.model.decoder_dim},
           {"decoder_heads", cfg.model.decoder_heads},
           {"mask_ratio", cfg.model.mask_ratio},
           {"gelu", cfg.model.gelu_mode == ops::GeluMode::kTanh ? "tanh" : "erf"},
           {"ln_eps", cfg.model.ln_eps},
           {"hog_bins", cfg.model.hog.num_bins},
           {"hog_channel_rule",
            cfg.model.hog.channel_rule == HogChannelRule::kMaxChannel ? "max" : "sum"},
           {"hog_eps", cfg.model.hog.eps}};
    json s{{"num_layers", cfg.schedule.num_layers},
           {"t0", cfg.schedule.t0},
           {"spacing", cfg.schedule.spacing == Spacing::kCubic ? "cubic" : "linear"},
           {"lr_scaling", cfg.schedule.lr_scaling == LrScaling::kScaled ? "scaled" : "unscaled"},
           {"base_lr", cfg.schedule.base_lr},
           {"warmup_fraction", cfg.schedule.warmup_fraction}};
    json t{{"batch_size", cfg.trainer.batch_size},
           {"steps", cfg.trainer.steps},
           {"seed", cfg.trainer.seed},
           {"precision", cfg.trainer.precision},
           {"measure", cfg.trainer.measure}};
    json d{{"source", cfg.data.source}, {"count", cfg.data.count}, {"path", cfg.data.path}};
    json root{{"preset", cfg.preset},
              {"model", m},
              {"schedule", s},
              {"trainer", t},
              {"data", d},
              {"out_dir", cfg.out_dir}};
    return root.dump(2) + "\n";
}

}  // namespace vitfreeze
