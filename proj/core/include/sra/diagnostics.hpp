#pragma once

// Representation diagnostics: linear probes on spatially pooled taps, PCA,
// and a Gaussian Frechet distance between feature sets.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sra/backbone.hpp"
#include "sra/dataset.hpp"
#include "sra/process.hpp"
#include "sra/tensor.hpp"

namespace sra {

struct TrainState;

struct ProbeConfig {
    int tap_layer = 1;
    double probe_timestep = 0.0;  // family units
    int epochs = 20;
    int batch_size = 64;
    double learning_rate = 0.1;  // peak of the cosine decay
    double momentum = 0.9;
    double weight_decay = 0.0;
    double test_fraction = 0.25;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const ProbeConfig&) const = default;
};

struct AnalysisConfig {
    std::vector<int> layers;        // 1-based
    std::vector<double> timesteps;  // family units
    std::int64_t num_samples = 1024;
    int pca_components = 2;
    bool include_teacher = true;
    std::uint64_t seed = 0;
    ProbeConfig probe;

    bool operator==(const AnalysisConfig&) const = default;
};

/// Pooled taps [num_samples, D] per requested layer for inputs noised to
/// family time t. Noise for sample i comes from its own stream, and every
/// sample is conditioned on the null label.
std::map<int, Tensor> extract_features(DiffusionTransformer& model, const ForwardProcess& process,
                                       const Tensor& images, const std::set<int>& layers, double t,
                                       std::uint64_t seed, int batch_size = 64);
Tensor extract_features(DiffusionTransformer& model, const ForwardProcess& process, const Tensor& images,
                        int tap_layer, double t, std::uint64_t seed);

/// Held-out top-1 accuracy of a softmax classifier trained on standardised
/// features. Splits by a seeded permutation.
double linear_probe(const Tensor& features, std::span<const int> labels, const ProbeConfig& config);
double linear_probe(const Tensor& train_features, std::span<const int> train_labels, const Tensor& test_features,
                    std::span<const int> test_labels, const ProbeConfig& config);

struct PcaResult {
    Tensor mean;          // [D]
    Tensor components;    // [k, D], orthonormal rows
    Tensor projected;     // [N, k]
    std::vector<double> explained_variance_ratio;
};

PcaResult pca_project(const Tensor& features, int k);

/// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}), with `shrinkage` * I
/// added to both covariances.
double frechet_gaussian_distance(const Tensor& features_a, const Tensor& features_b, double shrinkage = 1e-6);

/// Images flattened and mapped through a seeded Gaussian matrix to `dim`.
Tensor random_projection_features(const Tensor& images, int dim, std::uint64_t seed);
Tensor flatten_images(const Tensor& images);

struct FrechetProxy {
    double pixel = 0.0;
    double projected = 0.0;
};
FrechetProxy frechet_proxy(const Tensor& samples, const Tensor& reference, std::uint64_t seed);

struct ProbeCell {
    std::string weights;  // "student" or "teacher"
    int layer = 0;
    double timestep = 0.0;
    double accuracy = 0.0;
};

struct PcaArtifact {
    std::string weights;
    int layer = 0;
    double timestep = 0.0;
    PcaResult pca;
    std::vector<int> labels;
};

struct AnalysisReport {
    std::vector<ProbeCell> cells;
    std::vector<PcaArtifact> pca;
    nlohmann::json metadata = nlohmann::json::object();

    /// Accuracy of one cell; throws std::out_of_range if absent.
    double accuracy(const std::string& weights, int layer, double timestep) const;
};

/// Probe grid (and optionally PCA) over layers x timesteps for each named
/// model on a labelled dataset.
AnalysisReport analyze_models(const std::vector<std::pair<std::string, DiffusionTransformer*>>& models,
                              const ForwardProcess& process, const ShapesDataset& data,
                              const AnalysisConfig& config, bool with_pca);

/// Student and (optionally) teacher of a training state.
AnalysisReport analyze_checkpoint(TrainState& state, const ShapesDataset& data, const AnalysisConfig& config,
                                  bool with_pca = true);

/// probe_report.csv, report.json and pca_<weights>_layer<L>_t<T>.sra.
void write_analysis(const AnalysisReport& report, const std::filesystem::path& dir);

}  // namespace sra
