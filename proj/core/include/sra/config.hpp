#pragma once

// JSON run configuration. Every field has a default; unknown keys are
// rejected so typos surface instead of silently falling back.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "sra/alignment.hpp"
#include "sra/backbone.hpp"
#include "sra/diagnostics.hpp"
#include "sra/process.hpp"
#include "sra/sampler.hpp"
#include "sra/trainer.hpp"

namespace sra {

using json = nlohmann::json;

/// Where training images come from: a dataset archive, or a generated
/// shapes set when `path` is empty.
struct DatasetConfig {
    std::string path;
    std::int64_t num_samples = 4096;
    int num_classes = 4;
    std::uint64_t seed = 1234;

    bool operator==(const DatasetConfig&) const = default;
};

struct RunConfig {
    ModelConfig model;
    ProcessConfig process;
    TrainConfig train;
    std::optional<SraConfig> sra;  // nullopt: baseline
    SampleConfig sample;
    DatasetConfig dataset;
    AnalysisConfig analysis;
    std::string output_dir = "runs/default";
    std::uint64_t seed = 0;

    /// Field-level checks plus cross-field legality.
    void validate() const;
    bool operator==(const RunConfig&) const = default;
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

void to_json(json& j, const ModelConfig& c);
void from_json(const json& j, ModelConfig& c);
void to_json(json& j, const ProcessConfig& c);
void from_json(const json& j, ProcessConfig& c);
void to_json(json& j, const TrainConfig& c);
void from_json(const json& j, TrainConfig& c);
void to_json(json& j, const SraConfig& c);
void from_json(const json& j, SraConfig& c);
void to_json(json& j, const SampleConfig& c);
void from_json(const json& j, SampleConfig& c);
void to_json(json& j, const DatasetConfig& c);
void from_json(const json& j, DatasetConfig& c);
void to_json(json& j, const ProbeConfig& c);
void from_json(const json& j, ProbeConfig& c);
void to_json(json& j, const AnalysisConfig& c);
void from_json(const json& j, AnalysisConfig& c);

/// Resolves defaults that depend on other sections (alignment layers and
/// interval from family and depth, analysis grid, seeds) and validates.
RunConfig resolve_run_config(const json& j);
json to_json(const RunConfig& c);
RunConfig load_run_config(const std::filesystem::path& path);
/// Writes resolved_config.json into `dir`, creating it if needed.
void write_resolved_config(const RunConfig& c, const std::filesystem::path& dir);

/// Default probe timesteps for a family.
std::vector<double> default_probe_timesteps(const ProcessConfig& process);

/// Loads or generates the dataset described by the config.
ShapesDataset make_dataset(const DatasetConfig& d, const ModelConfig& model);

}  // namespace sra
