#pragma once

// Training loop for the baseline and the alignment-augmented objective.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sra/alignment.hpp"
#include "sra/backbone.hpp"
#include "sra/dataset.hpp"
#include "sra/optim.hpp"
#include "sra/process.hpp"
#include "sra/rng.hpp"

namespace sra {

struct TrainConfig {
    int batch_size = 64;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.0;
    std::int64_t total_steps = 2000;
    double grad_clip_norm = 1.0;  // +inf disables clipping
    std::uint64_t seed = 0;
    int log_every = 10;
    int checkpoint_every = 500;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

struct MetricsRecord {
    std::int64_t step = 0;
    double gen_loss = 0.0;
    double align_loss = 0.0;
    double joint_loss = 0.0;
    double grad_norm = 0.0;  // before clipping
    double wall_time = 0.0;  // seconds since the loop (re)started

    nlohmann::json to_json() const;
    static MetricsRecord from_json(const nlohmann::json& j);
    /// Equality of every field but wall_time, bit for bit.
    bool same_values(const MetricsRecord& other) const;
};

/// Raised when a step produces a non-finite loss or gradient. The state is
/// left as it was before the step.
class DivergenceError : public std::domain_error {
public:
    DivergenceError(const std::string& what, std::int64_t step) : std::domain_error(what), step_(step) {}
    std::int64_t step() const { return step_; }

private:
    std::int64_t step_;
};

/// Raised by load_checkpoint when the stored configuration differs from
/// the expected one.
class CheckpointMismatch : public std::runtime_error {
public:
    CheckpointMismatch(const std::string& field, const std::string& expected, const std::string& found)
        : std::runtime_error("checkpoint " + field + " mismatch: expected " + expected + ", found " + found),
          field_(field) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

/// Everything a run needs to continue: student, projection head, EMA
/// teacher, optimizer moments and the step counter. A baseline run keeps
/// the same members; its alignment config only drives the EMA and the
/// (unused) interval draws.
struct TrainState {
    TrainState(ModelConfig model, ProcessConfig process, TrainConfig train, std::optional<SraConfig> sra);

    ModelConfig model_config;
    ProcessConfig process_config;
    TrainConfig train_config;
    SraConfig sra_config;
    bool alignment_enabled;

    ForwardProcess process;
    DiffusionTransformer student;
    ProjectionHead head;
    TeacherState teacher;
    AdamW optimizer;
    std::int64_t step = 0;

    std::vector<ParamStore*> trainable() { return {&student.params(), &head.params()}; }
};

/// One optimisation step on images x0 with clean labels. Draws, in order,
/// per-sample times, noise, label dropout and the interval k from `rng`.
MetricsRecord train_step(TrainState& state, const Tensor& x0, std::span<const int> labels, Rng& rng);

/// Dataset indices for 1-based step `step`: consecutive slices of a
/// per-epoch permutation seeded by (seed, epoch).
std::vector<std::int64_t> batch_indices(std::int64_t dataset_size, int batch_size, std::uint64_t seed,
                                        std::int64_t step);

struct LoopOptions {
    std::filesystem::path output_dir;  // empty: nothing is written
    std::function<void(const TrainState&, const MetricsRecord&)> on_step;
    bool verbose = false;
};

/// Runs from state.step to train_config.total_steps. Writes metrics.jsonl,
/// checkpoints/step_NNNNNNN.ckpt at the configured cadence (including the
/// starting step) and checkpoints/final.ckpt. When resuming, metrics after
/// the resumed step are discarded first. Returns the records emitted.
std::vector<MetricsRecord> train_loop(TrainState& state, const ShapesDataset& data, const LoopOptions& options);

std::filesystem::path checkpoint_path(const std::filesystem::path& output_dir, std::int64_t step);
std::filesystem::path final_checkpoint_path(const std::filesystem::path& output_dir);

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);
/// Also checks the stored model configuration against `expected`.
TrainState load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path);

}  // namespace sra
