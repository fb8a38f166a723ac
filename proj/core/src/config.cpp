#include "sra/config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <sstream>
#include <string_view>

namespace sra {
namespace {

void check_keys(const json& j, std::string_view section, std::initializer_list<std::string_view> allowed) {
    if (!j.is_object()) throw ConfigError(std::string(section) + ": expected an object");
    for (const auto& [key, _] : j.items()) {
        bool known = false;
        for (auto a : allowed) known = known || key == a;
        if (!known) throw ConfigError(std::string(section) + ": unknown key '" + key + "'");
    }
}

template <typename T>
void read(const json& j, std::string_view section, const char* key, T& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    try {
        it->get_to(out);
    } catch (const json::exception& e) {
        throw ConfigError(std::string(section) + "." + key + ": " + e.what());
    }
}

template <typename Enum, typename Parse>
void read_enum(const json& j, std::string_view section, const char* key, Enum& out, Parse parse) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_string()) throw ConfigError(std::string(section) + "." + key + ": expected a string");
    try {
        out = parse(it->get<std::string>());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string(section) + "." + key + ": " + e.what());
    }
}

// JSON has no infinity; "inf" strings and null stand in for it.
void read_clip(const json& j, double& out) {
    auto it = j.find("grad_clip_norm");
    if (it == j.end()) return;
    if (it->is_null() || (it->is_string() && (*it == "inf" || *it == "none")))
        out = std::numeric_limits<double>::infinity();
    else if (it->is_number())
        out = it->get<double>();
    else
        throw ConfigError("train.grad_clip_norm: expected a number, \"inf\" or null");
}

template <typename T>
void section(const json& root, const char* key, T& out) {
    if (auto it = root.find(key); it != root.end()) it->get_to(out);
}

}  // namespace

void to_json(json& j, const ModelConfig& c) {
    j = {{"input_height", c.input_height}, {"input_width", c.input_width}, {"channels", c.channels},
         {"patch_size", c.patch_size},     {"depth", c.depth},             {"hidden_dim", c.hidden_dim},
         {"num_heads", c.num_heads},       {"num_classes", c.num_classes}, {"label_dropout_prob", c.label_dropout_prob},
         {"mlp_ratio", c.mlp_ratio},       {"frequency_dim", c.frequency_dim},
         {"tap_point", to_string(c.tap_point)}};
}

void from_json(const json& j, ModelConfig& c) {
    constexpr auto s = "model";
    check_keys(j, s, {"preset", "input_height", "input_width", "channels", "patch_size", "depth", "hidden_dim",
                      "num_heads", "num_classes", "label_dropout_prob", "mlp_ratio", "frequency_dim", "tap_point"});
    if (auto it = j.find("preset"); it != j.end()) {
        try {
            c = ModelConfig::preset(it->get<std::string>());
        } catch (const std::exception& e) {
            throw ConfigError(std::string("model.preset: ") + e.what());
        }
    }
    read(j, s, "input_height", c.input_height);
    read(j, s, "input_width", c.input_width);
    read(j, s, "channels", c.channels);
    read(j, s, "patch_size", c.patch_size);
    read(j, s, "depth", c.depth);
    read(j, s, "hidden_dim", c.hidden_dim);
    read(j, s, "num_heads", c.num_heads);
    read(j, s, "num_classes", c.num_classes);
    read(j, s, "label_dropout_prob", c.label_dropout_prob);
    read(j, s, "mlp_ratio", c.mlp_ratio);
    read(j, s, "frequency_dim", c.frequency_dim);
    read_enum(j, s, "tap_point", c.tap_point, parse_tap_point);
}

void to_json(json& j, const ProcessConfig& c) {
    j = {{"family", to_string(c.family)},
         {"interpolant", to_string(c.interpolant)},
         {"num_timesteps", c.num_timesteps},
         {"beta_start", c.beta_start},
         {"beta_end", c.beta_end}};
}

void from_json(const json& j, ProcessConfig& c) {
    constexpr auto s = "process";
    check_keys(j, s, {"family", "interpolant", "num_timesteps", "beta_start", "beta_end"});
    read_enum(j, s, "family", c.family, parse_family);
    read_enum(j, s, "interpolant", c.interpolant, parse_interpolant);
    read(j, s, "num_timesteps", c.num_timesteps);
    read(j, s, "beta_start", c.beta_start);
    read(j, s, "beta_end", c.beta_end);
}

void to_json(json& j, const TrainConfig& c) {
    j = {{"batch_size", c.batch_size},
         {"learning_rate", c.learning_rate},
         {"beta1", c.beta1},
         {"beta2", c.beta2},
         {"weight_decay", c.weight_decay},
         {"total_steps", c.total_steps},
         {"seed", c.seed},
         {"log_every", c.log_every},
         {"checkpoint_every", c.checkpoint_every}};
    if (std::isinf(c.grad_clip_norm))
        j["grad_clip_norm"] = "inf";
    else
        j["grad_clip_norm"] = c.grad_clip_norm;
}

void from_json(const json& j, TrainConfig& c) {
    constexpr auto s = "train";
    check_keys(j, s, {"batch_size", "learning_rate", "beta1", "beta2", "weight_decay", "total_steps",
                      "grad_clip_norm", "seed", "log_every", "checkpoint_every"});
    read(j, s, "batch_size", c.batch_size);
    read(j, s, "learning_rate", c.learning_rate);
    read(j, s, "beta1", c.beta1);
    read(j, s, "beta2", c.beta2);
    read(j, s, "weight_decay", c.weight_decay);
    read(j, s, "total_steps", c.total_steps);
    read_clip(j, c.grad_clip_norm);
    read(j, s, "seed", c.seed);
    read(j, s, "log_every", c.log_every);
    read(j, s, "checkpoint_every", c.checkpoint_every);
}

void to_json(json& j, const SraConfig& c) {
    j = {{"student_layer", c.student_layer},
         {"teacher_layer", c.teacher_layer},
         {"k_max", c.k_max},
         {"lambda", c.lambda},
         {"ema_alpha", c.ema_alpha},
         {"use_projection_head", c.use_projection_head},
         {"distance", to_string(c.distance)},
         {"smooth_l1_beta", c.smooth_l1_beta},
         {"k_per_sample", c.k_per_sample},
         {"share_noise", c.share_noise},
         {"ema_schedule", to_string(c.ema_schedule)},
         {"ema_alpha_start", c.ema_alpha_start}};
}

void from_json(const json& j, SraConfig& c) {
    constexpr auto s = "sra";
    check_keys(j, s, {"enabled", "student_layer", "teacher_layer", "k_max", "lambda", "ema_alpha",
                      "use_projection_head", "distance", "smooth_l1_beta", "k_per_sample", "share_noise",
                      "ema_schedule", "ema_alpha_start"});
    read(j, s, "student_layer", c.student_layer);
    read(j, s, "teacher_layer", c.teacher_layer);
    read(j, s, "k_max", c.k_max);
    read(j, s, "lambda", c.lambda);
    read(j, s, "ema_alpha", c.ema_alpha);
    read(j, s, "use_projection_head", c.use_projection_head);
    read_enum(j, s, "distance", c.distance, parse_distance);
    read(j, s, "smooth_l1_beta", c.smooth_l1_beta);
    read(j, s, "k_per_sample", c.k_per_sample);
    read(j, s, "share_noise", c.share_noise);
    read_enum(j, s, "ema_schedule", c.ema_schedule, parse_ema_schedule);
    read(j, s, "ema_alpha_start", c.ema_alpha_start);
}

void to_json(json& j, const SampleConfig& c) {
    j = {{"family", to_string(c.family)},        {"num_steps", c.num_steps},
         {"guidance_scale", c.guidance_scale},   {"sde_mode", to_string(c.sde_mode)},
         {"seed", c.seed},                       {"num_samples", c.num_samples},
         {"class_id", c.class_id}};
}

void from_json(const json& j, SampleConfig& c) {
    constexpr auto s = "sample";
    check_keys(j, s, {"family", "num_steps", "guidance_scale", "sde_mode", "seed", "num_samples", "class_id"});
    read_enum(j, s, "family", c.family, parse_family);
    read(j, s, "num_steps", c.num_steps);
    read(j, s, "guidance_scale", c.guidance_scale);
    read_enum(j, s, "sde_mode", c.sde_mode, parse_sde_mode);
    read(j, s, "seed", c.seed);
    read(j, s, "num_samples", c.num_samples);
    read(j, s, "class_id", c.class_id);
}

void to_json(json& j, const DatasetConfig& c) {
    j = {{"path", c.path}, {"num_samples", c.num_samples}, {"num_classes", c.num_classes}, {"seed", c.seed}};
}

void from_json(const json& j, DatasetConfig& c) {
    constexpr auto s = "dataset";
    check_keys(j, s, {"path", "num_samples", "num_classes", "seed"});
    read(j, s, "path", c.path);
    read(j, s, "num_samples", c.num_samples);
    read(j, s, "num_classes", c.num_classes);
    read(j, s, "seed", c.seed);
}

void to_json(json& j, const ProbeConfig& c) {
    j = {{"tap_layer", c.tap_layer},         {"probe_timestep", c.probe_timestep}, {"epochs", c.epochs},
         {"batch_size", c.batch_size},       {"learning_rate", c.learning_rate},   {"momentum", c.momentum},
         {"weight_decay", c.weight_decay},   {"test_fraction", c.test_fraction},   {"seed", c.seed}};
}

void from_json(const json& j, ProbeConfig& c) {
    constexpr auto s = "analysis.probe";
    check_keys(j, s, {"tap_layer", "probe_timestep", "epochs", "batch_size", "learning_rate", "momentum",
                      "weight_decay", "test_fraction", "seed"});
    read(j, s, "tap_layer", c.tap_layer);
    read(j, s, "probe_timestep", c.probe_timestep);
    read(j, s, "epochs", c.epochs);
    read(j, s, "batch_size", c.batch_size);
    read(j, s, "learning_rate", c.learning_rate);
    read(j, s, "momentum", c.momentum);
    read(j, s, "weight_decay", c.weight_decay);
    read(j, s, "test_fraction", c.test_fraction);
    read(j, s, "seed", c.seed);
}

void to_json(json& j, const AnalysisConfig& c) {
    j = {{"layers", c.layers},
         {"timesteps", c.timesteps},
         {"num_samples", c.num_samples},
         {"pca_components", c.pca_components},
         {"include_teacher", c.include_teacher},
         {"seed", c.seed},
         {"probe", c.probe}};
}

void from_json(const json& j, AnalysisConfig& c) {
    constexpr auto s = "analysis";
    check_keys(j, s, {"layers", "timesteps", "num_samples", "pca_components", "include_teacher", "seed", "probe"});
    read(j, s, "layers", c.layers);
    read(j, s, "timesteps", c.timesteps);
    read(j, s, "num_samples", c.num_samples);
    read(j, s, "pca_components", c.pca_components);
    read(j, s, "include_teacher", c.include_teacher);
    read(j, s, "seed", c.seed);
    if (auto it = j.find("probe"); it != j.end()) it->get_to(c.probe);
}

std::vector<double> default_probe_timesteps(const ProcessConfig& process) {
    if (process.family == Family::discrete_denoise) {
        const int T = process.num_timesteps;
        return {0.0, std::floor(0.25 * T), std::floor(0.5 * T), std::floor(0.75 * T)};
    }
    return {0.0, 0.25, 0.5, 0.75};
}

void RunConfig::validate() const {
    auto wrap = [](const char* what, auto&& fn) {
        try {
            fn();
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(std::string(what) + ": " + e.what());
        }
    };
    wrap("model", [&] { model.validate(); });
    wrap("process", [&] { ForwardProcess{process}; });
    wrap("train", [&] { train.validate(); });
    if (sra) wrap("sra", [&] { sra->validate(model.depth); });
    wrap("sample", [&] { sample.validate(); });
    wrap("analysis.probe", [&] { analysis.probe.validate(); });

    if (sample.family != process.family)
        throw ConfigError("sample.family '" + to_string(sample.family) + "' does not match process.family '" +
                          to_string(process.family) + "'");
    if (process.family == Family::discrete_denoise && sample.num_steps > process.num_timesteps)
        throw ConfigError("sample.num_steps exceeds process.num_timesteps");
    if (sample.class_id >= model.num_classes) throw ConfigError("sample.class_id is not a valid class");
    if (dataset.num_classes != model.num_classes)
        throw ConfigError("dataset.num_classes must equal model.num_classes");
    if (dataset.path.empty()) {
        if (model.channels != 1 || model.input_height != model.input_width)
            throw ConfigError("generated shapes are square single-channel images; adjust the model geometry");
        if (dataset.num_samples < dataset.num_classes) throw ConfigError("dataset.num_samples is below num_classes");
    }
    for (int l : analysis.layers)
        if (l < 1 || l > model.depth) throw ConfigError("analysis.layers entries must lie in [1, depth]");
    const ForwardProcess fp(process);
    for (double t : analysis.timesteps) wrap("analysis.timesteps", [&] { fp.validate_time(t); });
    if (analysis.pca_components < 1) throw ConfigError("analysis.pca_components must be positive");
    if (analysis.num_samples < 2 * model.num_classes) throw ConfigError("analysis.num_samples is too small");
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

RunConfig resolve_run_config(const json& j) {
    check_keys(j, "config",
               {"model", "process", "train", "sra", "sample", "dataset", "analysis", "output_dir", "seed"});
    RunConfig c;
    if (auto it = j.find("seed"); it != j.end()) it->get_to(c.seed);
    section(j, "model", c.model);
    section(j, "process", c.process);

    // Seeds of the individual sections default to the run seed.
    c.train.seed = c.seed;
    c.sample.seed = c.seed;
    c.analysis.seed = c.seed;
    c.analysis.probe.seed = c.seed;
    c.sample.family = c.process.family;
    section(j, "train", c.train);
    section(j, "sample", c.sample);
    section(j, "dataset", c.dataset);
    section(j, "analysis", c.analysis);
    if (auto it = j.find("output_dir"); it != j.end()) it->get_to(c.output_dir);
    if (j.find("dataset") == j.end() || !j.at("dataset").contains("num_classes"))
        c.dataset.num_classes = c.model.num_classes;

    const auto it = j.find("sra");
    const bool enabled = it == j.end() || (!it->is_null() && it->value("enabled", true));
    if (enabled) {
        SraConfig s = SraConfig::defaults_for(c.process.family, c.model.depth);
        if (it != j.end()) it->get_to(s);
        c.sra = s;
    }

    if (c.analysis.layers.empty())
        for (int l = 1; l <= c.model.depth; ++l) c.analysis.layers.push_back(l);
    if (c.analysis.timesteps.empty()) c.analysis.timesteps = default_probe_timesteps(c.process);

    c.validate();
    return c;
}

json to_json(const RunConfig& c) {
    json j = {{"model", c.model},     {"process", c.process},   {"train", c.train},
              {"sample", c.sample},   {"dataset", c.dataset},   {"analysis", c.analysis},
              {"output_dir", c.output_dir}, {"seed", c.seed}};
    if (c.sra) {
        json s = *c.sra;
        s["enabled"] = true;
        j["sra"] = s;
    } else {
        j["sra"] = nullptr;
    }
    return j;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
        j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return resolve_run_config(j);
}

void write_resolved_config(const RunConfig& c, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto path = dir / "resolved_config.json";
    std::ofstream out(path);
    out << to_json(c).dump(2) << '\n';
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

ShapesDataset make_dataset(const DatasetConfig& d, const ModelConfig& model) {
    ShapesDataset data = d.path.empty() ? generate_shapes(d.num_samples, d.num_classes, d.seed, model.input_height)
                                        : load_dataset(d.path);
    const Shape want = model.image_shape(data.size());
    if (data.images.shape() != want)
        throw ConfigError("dataset images " + shape_string(data.images.shape()) + " do not match the model input " +
                          shape_string(want));
    if (data.num_classes != model.num_classes) throw ConfigError("dataset class count does not match the model");
    return data;
}

}  // namespace sra
