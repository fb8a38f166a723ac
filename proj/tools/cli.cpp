#include "sra_tools/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>

#include <CLI11.hpp>

#include "sra/archive.hpp"
#include "sra/config.hpp"
#include "sra/dataset.hpp"
#include "sra/diagnostics.hpp"
#include "sra/sampler.hpp"
#include "sra/trainer.hpp"

namespace fs = std::filesystem;

namespace sra::cli {
namespace {

// Commands that operate on a checkpoint default to <run>/<command>, where
// the checkpoint lives at <run>/checkpoints/<file>.
fs::path default_output(const fs::path& checkpoint, const std::string& command) {
    const fs::path parent = checkpoint.parent_path();
    const fs::path run = parent.filename() == "checkpoints" ? parent.parent_path() : parent;
    return run / command;
}

void write_json(const json& j, const fs::path& dir, const std::string& name) {
    fs::create_directories(dir);
    std::ofstream out(dir / name);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("failed writing " + (dir / name).string());
}

json checkpoint_summary(const TrainState& s) {
    json j = {{"step", s.step},
              {"model", s.model_config},
              {"process", s.process_config},
              {"train", s.train_config},
              {"alignment_enabled", s.alignment_enabled}};
    j["sra"] = s.sra_config;
    return j;
}

DiffusionTransformer& pick_weights(TrainState& state, const std::string& weights) {
    if (weights == "student") return state.student;
    if (weights == "teacher") return state.teacher.model();
    throw std::invalid_argument("--weights must be 'student' or 'teacher'");
}

// Probe data is generated independently of the training set so held-out
// accuracy never sees training images.
ShapesDataset probe_dataset(const ModelConfig& model, std::int64_t num, std::uint64_t seed) {
    return generate_shapes(num, model.num_classes, seed + 0x9e3779b9ULL, model.input_height);
}

struct TrainArgs {
    std::string config;
    bool baseline = false;
    std::string resume;
    std::string output;
    bool quiet = false;
};

int run_train(const TrainArgs& a, std::ostream& out) {
    RunConfig cfg = load_run_config(a.config);
    if (a.baseline) cfg.sra.reset();
    if (!a.output.empty()) cfg.output_dir = a.output;
    const fs::path dir = cfg.output_dir;
    write_resolved_config(cfg, dir);
    const ShapesDataset data = make_dataset(cfg.dataset, cfg.model);

    std::optional<TrainState> state;
    if (!a.resume.empty()) {
        state.emplace(load_checkpoint(a.resume, cfg.model));
        if (state->alignment_enabled != cfg.sra.has_value())
            throw std::invalid_argument("--resume: checkpoint and config disagree on whether alignment is enabled");
        state->train_config.total_steps = cfg.train.total_steps;
    } else {
        state.emplace(cfg.model, cfg.process, cfg.train, cfg.sra);
    }
    LoopOptions opts;
    opts.output_dir = dir;
    opts.verbose = !a.quiet;
    const auto records = train_loop(*state, data, opts);
    out << "trained " << (state->alignment_enabled ? "sra" : "baseline") << " model to step " << state->step;
    if (!records.empty()) out << ", final gen_loss " << records.back().gen_loss;
    out << "\ncheckpoint: " << final_checkpoint_path(dir).string() << "\n";
    return 0;
}

struct SampleArgs {
    std::string checkpoint;
    int class_id = -1;
    int num = 16;
    double guidance = 1.0;
    int steps = 250;
    std::uint64_t seed = 0;
    std::string mode = "sde_wt_sigma";
    std::string weights = "student";
    std::string output;
    bool grid = true;
};

int run_sample(const SampleArgs& a, std::ostream& out) {
    TrainState state = load_checkpoint(a.checkpoint);
    SampleConfig sc;
    sc.family = state.process_config.family;
    sc.num_steps = a.steps;
    sc.guidance_scale = a.guidance;
    sc.sde_mode = parse_sde_mode(a.mode);
    sc.seed = a.seed;
    sc.num_samples = a.num;
    sc.class_id = a.class_id;
    sc.validate();
    if (sc.class_id >= state.model_config.num_classes) throw std::invalid_argument("--class is not a valid label");

    const fs::path dir = a.output.empty() ? default_output(a.checkpoint, "samples") : fs::path(a.output);
    json resolved = {{"command", "sample"},     {"checkpoint", a.checkpoint}, {"weights", a.weights},
                     {"sample", sc},            {"source", checkpoint_summary(state)}};
    write_json(resolved, dir, "resolved_config.json");

    auto& model = pick_weights(state, a.weights);
    const auto& mc = state.model_config;
    const Tensor samples = generate_samples(model_predictor(model, state.process), state.process, sc,
                                            {mc.channels, mc.input_height, mc.input_width}, mc.null_class());
    TensorArchive ar;
    ar.metadata() = {{"kind", "samples"}, {"sample", sc}, {"weights", a.weights}, {"step", state.step}};
    ar.put("samples", samples);
    ar.save(dir / "samples.sra");
    if (a.grid) write_image_grid(samples, (dir / "samples.pgm").string());
    out << "wrote " << sc.num_samples << " samples to " << (dir / "samples.sra").string() << "\n";
    return 0;
}

struct ProbeArgs {
    std::string checkpoint;
    std::vector<int> layers;
    std::vector<double> timesteps;
    std::int64_t num_samples = 1024;
    std::uint64_t seed = 0;
    int epochs = 20;
    bool teacher = true;
    std::string output;
};

AnalysisConfig analysis_config(const ProbeArgs& a, const TrainState& state) {
    AnalysisConfig c;
    c.layers = a.layers;
    if (c.layers.empty())
        for (int l = 1; l <= state.model_config.depth; ++l) c.layers.push_back(l);
    c.timesteps = a.timesteps.empty() ? default_probe_timesteps(state.process_config) : a.timesteps;
    for (int l : c.layers)
        if (l < 1 || l > state.model_config.depth) throw std::invalid_argument("--layers entries must lie in [1, depth]");
    for (double t : c.timesteps) state.process.validate_time(t);
    c.num_samples = a.num_samples;
    c.include_teacher = a.teacher;
    c.seed = a.seed;
    c.probe.seed = a.seed;
    c.probe.epochs = a.epochs;
    return c;
}

int run_analysis(const ProbeArgs& a, bool with_pca, std::ostream& out) {
    TrainState state = load_checkpoint(a.checkpoint);
    const AnalysisConfig cfg = analysis_config(a, state);
    const std::string command = with_pca ? "analyze" : "probe";
    const fs::path dir = a.output.empty() ? default_output(a.checkpoint, command) : fs::path(a.output);
    write_json({{"command", command}, {"checkpoint", a.checkpoint}, {"analysis", cfg},
                {"source", checkpoint_summary(state)}},
               dir, "resolved_config.json");
    const ShapesDataset data = probe_dataset(state.model_config, cfg.num_samples, cfg.seed);
    const AnalysisReport report = analyze_checkpoint(state, data, cfg, with_pca);
    write_analysis(report, dir);
    out << "weights,layer,timestep,accuracy\n";
    for (const auto& c : report.cells)
        out << c.weights << ',' << c.layer << ',' << c.timestep << ',' << std::fixed << std::setprecision(4)
            << c.accuracy << std::defaultfloat << '\n';
    out << "report: " << (dir / "probe_report.csv").string() << "\n";
    return 0;
}

struct CompareArgs {
    std::string run_a, run_b;
    std::string output;
    int num_samples = 256;
    int steps = 50;
    std::uint64_t seed = 0;
    std::int64_t probe_samples = 1024;
};

struct RunSummary {
    FrechetProxy fid;
    std::map<std::string, double> probes;
};

RunSummary summarize_run(const fs::path& run, const CompareArgs& a, const RunConfig& reference_cfg,
                         const Tensor& reference, const std::vector<double>& timesteps) {
    TrainState state = load_checkpoint(final_checkpoint_path(run));
    if (state.model_config != reference_cfg.model)
        throw std::invalid_argument("runs use different model configurations: " + run.string());
    SampleConfig sc;
    sc.family = state.process_config.family;
    sc.num_steps = a.steps;
    sc.num_samples = a.num_samples;
    sc.seed = a.seed;
    sc.sde_mode = SdeMode::sde_wt_sigma;
    const auto& mc = state.model_config;
    const Tensor samples = generate_samples(model_predictor(state.student, state.process), state.process, sc,
                                            {mc.channels, mc.input_height, mc.input_width}, mc.null_class());
    RunSummary s;
    s.fid = frechet_proxy(samples, reference, a.seed);

    const SraConfig layers =
        reference_cfg.sra.value_or(SraConfig::defaults_for(state.process_config.family, mc.depth));
    AnalysisConfig ac;
    ac.layers = {layers.student_layer, layers.teacher_layer};
    ac.timesteps = timesteps;
    ac.num_samples = a.probe_samples;
    ac.seed = a.seed;
    ac.probe.seed = a.seed;
    const ShapesDataset probe = probe_dataset(mc, ac.num_samples, a.seed);
    const auto report = analyze_checkpoint(state, probe, ac, false);
    for (const auto& c : report.cells) {
        std::ostringstream key;
        key << "probe_" << c.weights << "_layer" << c.layer << "_t" << c.timestep;
        s.probes[key.str()] = c.accuracy;
    }
    return s;
}

int run_compare(const CompareArgs& a, std::ostream& out) {
    const fs::path ra = a.run_a, rb = a.run_b;
    const RunConfig cfg_a = load_run_config(ra / "resolved_config.json");
    const RunConfig cfg_b = load_run_config(rb / "resolved_config.json");
    if (cfg_a.model != cfg_b.model || cfg_a.process != cfg_b.process)
        throw std::invalid_argument("compare: runs differ in model or process configuration");
    const fs::path dir = a.output.empty() ? ra.parent_path() / ("compare_" + ra.filename().string() + "_vs_" +
                                                                rb.filename().string())
                                          : fs::path(a.output);
    json resolved = {{"command", "compare"},      {"run_a", a.run_a},     {"run_b", a.run_b},
                     {"num_samples", a.num_samples}, {"steps", a.steps}, {"seed", a.seed},
                     {"probe_samples", a.probe_samples}};
    write_json(resolved, dir, "resolved_config.json");

    // Reference statistics come from the training distribution of run A.
    const ShapesDataset data = make_dataset(cfg_a.dataset, cfg_a.model);
    const std::int64_t n_ref = std::min<std::int64_t>(data.size(), 2048);
    const Tensor reference = data.slice(0, n_ref).images;
    std::vector<double> timesteps{cfg_a.analysis.timesteps.front()};
    if (cfg_a.analysis.timesteps.size() > 2) timesteps.push_back(cfg_a.analysis.timesteps[2]);

    const RunSummary sa = summarize_run(ra, a, cfg_a, reference, timesteps);
    const RunSummary sb = summarize_run(rb, a, cfg_a, reference, timesteps);

    std::vector<std::tuple<std::string, double, double>> rows{{"frechet_pixel", sa.fid.pixel, sb.fid.pixel},
                                                              {"frechet_projected", sa.fid.projected, sb.fid.projected}};
    for (const auto& [k, v] : sa.probes) rows.emplace_back(k, v, sb.probes.at(k));
    std::ofstream csv(dir / "comparison.csv");
    csv << "metric,run_a,run_b,delta\n";
    csv.precision(17);
    out << std::left << std::setw(32) << "metric" << std::setw(14) << "run_a" << std::setw(14) << "run_b"
        << "delta (b - a)\n";
    for (const auto& [k, va, vb] : rows) {
        csv << k << ',' << va << ',' << vb << ',' << (vb - va) << '\n';
        out << std::setw(32) << k << std::setw(14) << va << std::setw(14) << vb << (vb - va) << '\n';
    }
    if (!csv) throw std::runtime_error("failed writing comparison.csv");
    out << "report: " << (dir / "comparison.csv").string() << "\n";
    return 0;
}

struct DatasetArgs {
    std::int64_t num = 4096;
    int classes = 4;
    std::uint64_t seed = 1234;
    int size = 16;
    std::string output;
};

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Self-representation alignment for diffusion transformers", "sra"};
    app.require_subcommand(1);

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "train a model from a JSON run config");
    train->add_option("--config", ta.config, "run configuration file")->required();
    train->add_flag("--baseline", ta.baseline, "disable the alignment loss");
    train->add_option("--resume", ta.resume, "continue from a checkpoint");
    train->add_option("--output", ta.output, "override output_dir");
    train->add_flag("--quiet", ta.quiet, "suppress per-step logging");

    SampleArgs sa;
    auto* sample = app.add_subcommand("sample", "generate samples from a checkpoint");
    sample->add_option("--checkpoint", sa.checkpoint)->required();
    sample->add_option("--class", sa.class_id, "class label, -1 for unconditional");
    sample->add_option("--num", sa.num, "number of samples");
    sample->add_option("--guidance", sa.guidance, "classifier-free guidance scale (1 = off)");
    sample->add_option("--steps", sa.steps, "sampling steps");
    sample->add_option("--seed", sa.seed);
    sample->add_option("--mode", sa.mode, "ode or sde_wt_sigma (flow models)");
    sample->add_option("--weights", sa.weights, "student or teacher");
    sample->add_option("--output", sa.output, "output directory");
    sample->add_flag("!--no-grid", sa.grid, "skip the PGM image grid");

    ProbeArgs pa;
    auto add_probe_options = [&](CLI::App* c) {
        c->add_option("--checkpoint", pa.checkpoint)->required();
        c->add_option("--layers", pa.layers, "comma-separated 1-based layers (default: all)")->delimiter(',');
        c->add_option("--timesteps", pa.timesteps, "comma-separated family times (default: 4-point grid)")
            ->delimiter(',');
        c->add_option("--samples", pa.num_samples, "probe dataset size");
        c->add_option("--epochs", pa.epochs, "probe training epochs");
        c->add_option("--seed", pa.seed);
        c->add_flag("!--no-teacher", pa.teacher, "probe the student only");
        c->add_option("--output", pa.output, "output directory");
    };
    auto* probe = app.add_subcommand("probe", "linear-probe grid over layers and timesteps");
    add_probe_options(probe);
    auto* analyze = app.add_subcommand("analyze", "probe grid plus PCA of pooled features");
    add_probe_options(analyze);

    CompareArgs ca;
    auto* compare = app.add_subcommand("compare", "Frechet proxy and probe deltas between two runs");
    compare->add_option("--run-a", ca.run_a)->required();
    compare->add_option("--run-b", ca.run_b)->required();
    compare->add_option("--output", ca.output, "output directory");
    compare->add_option("--num-samples", ca.num_samples, "generated samples per run");
    compare->add_option("--steps", ca.steps, "sampling steps");
    compare->add_option("--probe-samples", ca.probe_samples, "probe dataset size");
    compare->add_option("--seed", ca.seed);

    DatasetArgs da;
    auto* dataset = app.add_subcommand("dataset", "generate a shapes dataset archive");
    dataset->add_option("--num", da.num);
    dataset->add_option("--classes", da.classes);
    dataset->add_option("--seed", da.seed);
    dataset->add_option("--size", da.size, "image side length");
    dataset->add_option("--output", da.output, "archive path")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (*train) return run_train(ta, out);
        if (*sample) return run_sample(sa, out);
        if (*probe) return run_analysis(pa, false, out);
        if (*analyze) return run_analysis(pa, true, out);
        if (*compare) return run_compare(ca, out);
        if (*dataset) {
            save_dataset(generate_shapes(da.num, da.classes, da.seed, da.size), da.output);
            out << "wrote " << da.num << " images to " << da.output << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

int dispatch(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return dispatch(args, std::cout, std::cerr);
}

}  // namespace sra::cli
