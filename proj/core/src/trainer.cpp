#include "sra/trainer.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

#include "sra/archive.hpp"
#include "sra/config.hpp"

namespace sra {
namespace {

constexpr const char* kCheckpointKind = "sra_checkpoint";
constexpr int kCheckpointVersion = 1;

bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

bool grads_finite(const std::vector<ParamStore*>& stores) {
    for (const auto* s : stores)
        for (const auto& p : *s)
            if (!all_finite(p.grad)) return false;
    return true;
}

void put_store(TensorArchive& ar, const std::string& prefix, const ParamStore& store) {
    for (const auto& p : store) ar.put(prefix + p.name, p.value);
}

void get_store(const TensorArchive& ar, const std::string& prefix, ParamStore& store) {
    for (auto& p : store) {
        const std::string name = prefix + p.name;
        if (!ar.contains(name)) throw ArchiveError("checkpoint is missing a tensor", name);
        const Tensor& t = ar.tensor(name);
        if (!t.same_shape(p.value))
            throw ArchiveError("checkpoint tensor has shape " + shape_string(t.shape()) + ", expected " +
                                   shape_string(p.value.shape()),
                               name);
        p.value = t;
    }
}

void put_moments(TensorArchive& ar, const std::string& prefix, const ParamStore& store,
                 const std::vector<Tensor>& moments) {
    for (std::size_t i = 0; i < store.size(); ++i) ar.put(prefix + store[i].name, moments[i]);
}

void get_moments(const TensorArchive& ar, const std::string& prefix, const ParamStore& store,
                 std::vector<Tensor>& moments) {
    for (std::size_t i = 0; i < store.size(); ++i) {
        const std::string name = prefix + store[i].name;
        if (!ar.contains(name)) throw ArchiveError("checkpoint is missing a tensor", name);
        const Tensor& t = ar.tensor(name);
        if (!t.same_shape(moments[i])) throw ArchiveError("optimizer moment has the wrong shape", name);
        moments[i] = t;
    }
}

std::vector<std::int64_t> epoch_permutation(std::int64_t n, std::uint64_t seed, std::int64_t epoch) {
    std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(seed, streams::shuffle, static_cast<std::uint64_t>(epoch));
    // Fisher-Yates with our own draws so the order is identical across
    // standard library implementations.
    for (std::int64_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i + 1)]);
    return perm;
}

}  // namespace

void TrainConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("train.batch_size must be positive");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train.learning_rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw std::invalid_argument("train betas must lie in [0, 1)");
    if (weight_decay < 0.0) throw std::invalid_argument("train.weight_decay must be nonnegative");
    if (total_steps < 0) throw std::invalid_argument("train.total_steps must be nonnegative");
    if (!(grad_clip_norm > 0.0)) throw std::invalid_argument("train.grad_clip_norm must be positive");
    if (log_every < 1) throw std::invalid_argument("train.log_every must be positive");
    if (checkpoint_every < 1) throw std::invalid_argument("train.checkpoint_every must be positive");
}

nlohmann::json MetricsRecord::to_json() const {
    return {{"step", step},           {"gen_loss", gen_loss},   {"align_loss", align_loss},
            {"joint_loss", joint_loss}, {"grad_norm", grad_norm}, {"wall_time", wall_time}};
}

MetricsRecord MetricsRecord::from_json(const nlohmann::json& j) {
    MetricsRecord r;
    r.step = j.at("step").get<std::int64_t>();
    r.gen_loss = j.at("gen_loss").get<double>();
    r.align_loss = j.at("align_loss").get<double>();
    r.joint_loss = j.at("joint_loss").get<double>();
    r.grad_norm = j.at("grad_norm").get<double>();
    r.wall_time = j.at("wall_time").get<double>();
    return r;
}

bool MetricsRecord::same_values(const MetricsRecord& o) const {
    return step == o.step && same_bits(gen_loss, o.gen_loss) && same_bits(align_loss, o.align_loss) &&
           same_bits(joint_loss, o.joint_loss) && same_bits(grad_norm, o.grad_norm);
}

TrainState::TrainState(ModelConfig model, ProcessConfig proc, TrainConfig train, std::optional<SraConfig> sra)
    : model_config(std::move(model)),
      process_config(proc),
      train_config(train),
      sra_config(sra.value_or(SraConfig::defaults_for(proc.family, model_config.depth))),
      alignment_enabled(sra.has_value()),
      process(proc),
      student((model_config.validate(), model_config), train.seed),
      head(model_config.hidden_dim, train.seed),
      teacher(student),
      optimizer(AdamWConfig{train.learning_rate, train.beta1, train.beta2, 1e-8, train.weight_decay},
                {&student.params(), &head.params()}) {
    train_config.validate();
    sra_config.validate(model_config.depth);
}

MetricsRecord train_step(TrainState& state, const Tensor& x0, std::span<const int> labels, Rng& rng) {
    const auto& mc = state.model_config;
    const std::int64_t B = x0.dim(0);
    if (x0.shape() != mc.image_shape(B)) throw std::invalid_argument("train_step: batch does not match the model");
    if (static_cast<std::int64_t>(labels.size()) != B) throw std::invalid_argument("train_step: label count");
    const std::int64_t next = state.step + 1;

    TrainBatch batch;
    batch.x0 = x0;
    batch.t.resize(static_cast<std::size_t>(B));
    for (auto& t : batch.t) t = state.process.sample_time(rng);
    batch.eps = Tensor(x0.shape());
    for (auto& e : batch.eps.values()) e = rng.normal();
    batch.class_ids = apply_label_dropout(labels, mc.label_dropout_prob, mc.null_class(), rng);

    state.student.params().zero_grad();
    state.head.params().zero_grad();

    ag::Tape tape;
    ag::Var prediction, align;
    if (state.alignment_enabled) {
        auto targets = sra_training_targets(tape, state.student, state.teacher, state.process, batch,
                                            state.sra_config, rng);
        prediction = targets.prediction;
        const ag::Var projected =
            state.sra_config.use_projection_head ? state.head.forward(tape, targets.student_tap) : targets.student_tap;
        align = alignment_loss(tape, targets.teacher_tap, projected, state.sra_config.distance,
                               state.sra_config.smooth_l1_beta);
    } else {
        // Same draw as the aligned path so both consume the stream identically.
        draw_intervals(state.sra_config, state.process.family(), B, rng);
        const Tensor x_t = state.process.noised(x0, batch.eps, batch.t);
        prediction = state.student
                         .forward_with_taps(tape, x_t, state.process.model_times(batch.t), batch.class_ids, {}, true)
                         .prediction;
    }
    const Tensor target = state.process.target(x0, batch.eps, batch.t);
    const ag::Var gen = ag::mse(tape, prediction, tape.constant_ref(target));

    MetricsRecord rec;
    rec.step = next;
    rec.gen_loss = gen.item();
    rec.align_loss = align ? align.item() : 0.0;
    ag::Var joint = gen;
    try {
        if (align) joint = joint_loss(tape, gen, align, state.sra_config.lambda);
        else if (!std::isfinite(rec.gen_loss)) throw std::domain_error("non-finite generative loss");
    } catch (const std::domain_error& e) {
        throw DivergenceError(std::string(e.what()) + " at step " + std::to_string(next), next);
    }
    rec.joint_loss = joint.item();

    tape.backward(joint);
    auto stores = state.trainable();
    if (!grads_finite(stores))
        throw DivergenceError("non-finite gradient at step " + std::to_string(next), next);
    rec.grad_norm = clip_grad_norm(stores, state.train_config.grad_clip_norm);
    state.optimizer.step(stores);
    state.teacher.update(state.student, ema_alpha_at(state.sra_config, next, state.train_config.total_steps));
    state.step = next;
    return rec;
}

std::vector<std::int64_t> batch_indices(std::int64_t n, int batch_size, std::uint64_t seed, std::int64_t step) {
    if (n <= 0) throw std::invalid_argument("batch_indices: empty dataset");
    if (step < 1) throw std::invalid_argument("batch_indices: steps are 1-based");
    std::vector<std::int64_t> out;
    out.reserve(static_cast<std::size_t>(batch_size));
    std::int64_t pos = (step - 1) * batch_size;
    std::int64_t epoch = -1;
    std::vector<std::int64_t> perm;
    for (int i = 0; i < batch_size; ++i, ++pos) {
        if (pos / n != epoch) {
            epoch = pos / n;
            perm = epoch_permutation(n, seed, epoch);
        }
        out.push_back(perm[static_cast<std::size_t>(pos % n)]);
    }
    return out;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::int64_t step) {
    std::ostringstream name;
    name << "step_" << std::setw(7) << std::setfill('0') << step << ".ckpt";
    return dir / "checkpoints" / name.str();
}

std::filesystem::path final_checkpoint_path(const std::filesystem::path& dir) {
    return dir / "checkpoints" / "final.ckpt";
}

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open metrics log " + path.string());
    std::vector<MetricsRecord> out;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(MetricsRecord::from_json(nlohmann::json::parse(line)));
    return out;
}

std::vector<MetricsRecord> train_loop(TrainState& state, const ShapesDataset& data, const LoopOptions& options) {
    if (data.size() == 0) throw std::invalid_argument("train_loop: dataset is empty");
    if (data.images.shape() != state.model_config.image_shape(data.size()))
        throw std::invalid_argument("train_loop: dataset images do not match the model input");
    const auto& tc = state.train_config;
    const bool write = !options.output_dir.empty();
    const auto metrics_path = options.output_dir / "metrics.jsonl";
    std::ofstream metrics;
    if (write) {
        std::filesystem::create_directories(options.output_dir / "checkpoints");
        std::vector<MetricsRecord> kept;
        if (state.step > 0 && std::filesystem::exists(metrics_path))
            for (const auto& r : read_metrics(metrics_path))
                if (r.step <= state.step) kept.push_back(r);
        metrics.open(metrics_path, std::ios::trunc);
        if (!metrics) throw std::runtime_error("cannot open " + metrics_path.string());
        for (const auto& r : kept) metrics << r.to_json().dump() << '\n';
        metrics.flush();
        if (state.step % tc.checkpoint_every == 0) save_checkpoint(state, checkpoint_path(options.output_dir, state.step));
    }

    std::vector<MetricsRecord> out;
    const auto start = std::chrono::steady_clock::now();
    while (state.step < tc.total_steps) {
        const std::int64_t next = state.step + 1;
        const auto idx = batch_indices(data.size(), tc.batch_size, tc.seed, next);
        const Tensor x0 = data.gather(idx);
        const auto labels = data.gather_labels(idx);
        Rng rng(tc.seed, streams::train_step, static_cast<std::uint64_t>(next));
        MetricsRecord rec = train_step(state, x0, labels, rng);
        rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (options.on_step) options.on_step(state, rec);
        if (state.step % tc.log_every == 0) {
            out.push_back(rec);
            if (write) {
                metrics << rec.to_json().dump() << '\n';
                metrics.flush();
            }
            if (options.verbose)
                std::cerr << "step " << rec.step << " gen " << rec.gen_loss << " align " << rec.align_loss
                          << " grad " << rec.grad_norm << " (" << rec.wall_time << " s)\n";
        }
        if (write && state.step % tc.checkpoint_every == 0)
            save_checkpoint(state, checkpoint_path(options.output_dir, state.step));
    }
    if (write) save_checkpoint(state, final_checkpoint_path(options.output_dir));
    return out;
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
    TensorArchive ar;
    json sra = state.sra_config;
    ar.metadata() = {{"kind", kCheckpointKind},
                     {"version", kCheckpointVersion},
                     {"step", state.step},
                     {"model", state.model_config},
                     {"process", state.process_config},
                     {"train", state.train_config},
                     {"sra", sra},
                     {"alignment_enabled", state.alignment_enabled},
                     {"teacher_updates", state.teacher.updates()},
                     {"optimizer_steps", state.optimizer.steps()}};
    put_store(ar, "student/", state.student.params());
    put_store(ar, "head/", state.head.params());
    put_store(ar, "teacher/", state.teacher.model().params());
    put_moments(ar, "adam_m/student/", state.student.params(), state.optimizer.first_moments(0));
    put_moments(ar, "adam_v/student/", state.student.params(), state.optimizer.second_moments(0));
    put_moments(ar, "adam_m/head/", state.head.params(), state.optimizer.first_moments(1));
    put_moments(ar, "adam_v/head/", state.head.params(), state.optimizer.second_moments(1));
    if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
    ar.save(path);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
    const auto ar = TensorArchive::load(path);
    const auto& meta = ar.metadata();
    if (meta.value("kind", "") != kCheckpointKind) throw ArchiveError("not a checkpoint: " + path.string());
    if (meta.value("version", 0) != kCheckpointVersion)
        throw ArchiveError("unsupported checkpoint version in " + path.string());
    ModelConfig model;
    ProcessConfig process;
    TrainConfig train;
    SraConfig sra;
    try {
        meta.at("model").get_to(model);
        meta.at("process").get_to(process);
        meta.at("train").get_to(train);
        meta.at("sra").get_to(sra);
    } catch (const std::exception& e) {
        throw ArchiveError(std::string("corrupt checkpoint metadata: ") + e.what());
    }
    const bool aligned = meta.at("alignment_enabled").get<bool>();
    TrainState state(model, process, train, aligned ? std::optional<SraConfig>(sra) : std::nullopt);
    state.sra_config = sra;
    get_store(ar, "student/", state.student.params());
    get_store(ar, "head/", state.head.params());
    get_store(ar, "teacher/", state.teacher.model().params());
    get_moments(ar, "adam_m/student/", state.student.params(), state.optimizer.first_moments(0));
    get_moments(ar, "adam_v/student/", state.student.params(), state.optimizer.second_moments(0));
    get_moments(ar, "adam_m/head/", state.head.params(), state.optimizer.first_moments(1));
    get_moments(ar, "adam_v/head/", state.head.params(), state.optimizer.second_moments(1));
    state.step = meta.at("step").get<std::int64_t>();
    state.teacher.set_updates(meta.at("teacher_updates").get<std::int64_t>());
    state.optimizer.set_steps(meta.at("optimizer_steps").get<std::int64_t>());

    const std::size_t expected = 3 * state.student.params().size() + 3 * state.head.params().size() +
                                 state.student.params().size();
    if (ar.size() != expected) throw ArchiveError("checkpoint holds unexpected extra tensors");
    return state;
}

TrainState load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
    TrainState state = load_checkpoint(path);
    const json want = expected, found = state.model_config;
    for (const auto& [key, value] : want.items())
        if (found.at(key) != value) throw CheckpointMismatch("model." + key, value.dump(), found.at(key).dump());
    return state;
}

}  // namespace sra
