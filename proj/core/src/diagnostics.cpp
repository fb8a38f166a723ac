#include "sra/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "sra/archive.hpp"
#include "sra/linalg.hpp"
#include "sra/rng.hpp"
#include "sra/trainer.hpp"

namespace sra {
namespace {

std::string format_time(double t) {
    std::ostringstream s;
    s << t;
    return s.str();
}

void check_labels(std::span<const int> labels, std::int64_t rows, int& num_classes) {
    if (static_cast<std::int64_t>(labels.size()) != rows)
        throw std::invalid_argument("linear_probe: feature and label counts differ");
    int hi = -1;
    for (int l : labels) {
        if (l < 0) throw std::invalid_argument("linear_probe: negative label");
        hi = std::max(hi, l);
    }
    num_classes = hi + 1;
}

}  // namespace

void ProbeConfig::validate() const {
    if (tap_layer < 1) throw std::invalid_argument("probe.tap_layer must be at least 1");
    if (epochs < 1) throw std::invalid_argument("probe.epochs must be positive");
    if (batch_size < 1) throw std::invalid_argument("probe.batch_size must be positive");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("probe.learning_rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("probe.momentum must lie in [0, 1)");
    if (weight_decay < 0.0) throw std::invalid_argument("probe.weight_decay must be nonnegative");
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw std::invalid_argument("probe.test_fraction must lie in (0, 1)");
}

std::map<int, Tensor> extract_features(DiffusionTransformer& model, const ForwardProcess& process,
                                       const Tensor& images, const std::set<int>& layers, double t,
                                       std::uint64_t seed, int batch_size) {
    const auto& mc = model.config();
    for (int l : layers)
        if (l < 1 || l > mc.depth) throw std::invalid_argument("extract_features: tap layer out of range");
    process.validate_time(t);
    const std::int64_t n = images.dim(0);
    if (images.shape() != mc.image_shape(n)) throw std::invalid_argument("extract_features: image shape mismatch");
    std::map<int, Tensor> out;
    if (layers.empty()) return out;
    for (int l : layers) out.emplace(l, Tensor({n, mc.hidden_dim}));

    const std::int64_t per = images.numel() / std::max<std::int64_t>(1, n);
    const std::int64_t T = mc.tokens(), D = mc.hidden_dim;
    for (std::int64_t begin = 0; begin < n; begin += batch_size) {
        const std::int64_t nb = std::min<std::int64_t>(batch_size, n - begin);
        Tensor x0(mc.image_shape(nb)), eps(mc.image_shape(nb));
        std::copy_n(images.data() + begin * per, nb * per, x0.data());
        for (std::int64_t i = 0; i < nb; ++i) {
            Rng rng(seed, streams::features, static_cast<std::uint64_t>(begin + i));
            for (std::int64_t j = 0; j < per; ++j) eps[i * per + j] = rng.normal();
        }
        const std::vector<double> tt(static_cast<std::size_t>(nb), t);
        const std::vector<int> ids(static_cast<std::size_t>(nb), mc.null_class());
        const Tensor x_t = process.noised(x0, eps, tt);
        ag::Tape tape(ag::Tape::Mode::no_grad);
        auto fwd = model.forward_with_taps(tape, x_t, process.model_times(tt), ids, layers, false);
        for (int l : layers) {
            const Tensor& tap = fwd.taps.at(l).value();
            Tensor& dst = out.at(l);
            for (std::int64_t i = 0; i < nb; ++i) {
                double* row = dst.data() + (begin + i) * D;
                for (std::int64_t k = 0; k < T; ++k)
                    for (std::int64_t d = 0; d < D; ++d) row[d] += tap[(i * T + k) * D + d];
                for (std::int64_t d = 0; d < D; ++d) row[d] /= static_cast<double>(T);
            }
        }
    }
    return out;
}

Tensor extract_features(DiffusionTransformer& model, const ForwardProcess& process, const Tensor& images,
                        int tap_layer, double t, std::uint64_t seed) {
    return extract_features(model, process, images, std::set<int>{tap_layer}, t, seed).at(tap_layer);
}

double linear_probe(const Tensor& features, std::span<const int> labels, const ProbeConfig& config) {
    config.validate();
    if (features.rank() != 2) throw std::invalid_argument("linear_probe: features must be [N, D]");
    const std::int64_t n = features.dim(0), d = features.dim(1);
    int classes = 0;
    check_labels(labels, n, classes);
    std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(config.seed, streams::probe, 0);
    for (std::int64_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i + 1)]);
    const auto n_test = static_cast<std::int64_t>(std::llround(config.test_fraction * static_cast<double>(n)));
    if (n_test < 1 || n_test >= n) throw std::invalid_argument("linear_probe: split leaves an empty side");

    Tensor train({n - n_test, d}), test({n_test, d});
    std::vector<int> train_l, test_l;
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t src = perm[i];
        const bool is_test = i < n_test;
        Tensor& dst = is_test ? test : train;
        const std::int64_t row = is_test ? i : i - n_test;
        std::copy_n(features.data() + src * d, d, dst.data() + row * d);
        (is_test ? test_l : train_l).push_back(labels[src]);
    }
    return linear_probe(train, train_l, test, test_l, config);
}

double linear_probe(const Tensor& train_features, std::span<const int> train_labels, const Tensor& test_features,
                    std::span<const int> test_labels, const ProbeConfig& config) {
    config.validate();
    if (train_features.rank() != 2 || test_features.rank() != 2 || train_features.dim(1) != test_features.dim(1))
        throw std::invalid_argument("linear_probe: features must be [N, D] with matching D");
    int classes = 0, test_classes = 0;
    check_labels(train_labels, train_features.dim(0), classes);
    check_labels(test_labels, test_features.dim(0), test_classes);
    {
        std::set<int> distinct(train_labels.begin(), train_labels.end());
        if (distinct.size() < 2) throw std::invalid_argument("linear_probe: need at least two classes");
    }
    if (test_features.dim(0) == 0) throw std::invalid_argument("linear_probe: empty held-out split");
    classes = std::max(classes, test_classes);

    // Standardise with train statistics, then scale by 1/sqrt(D) so the
    // training dynamics do not depend on how many (possibly redundant)
    // dimensions carry the signal.
    const std::int64_t D = train_features.dim(1);
    Eigen::MatrixXd X = to_eigen(train_features), Xt = to_eigen(test_features);
    const Eigen::RowVectorXd mean = X.colwise().mean();
    Eigen::RowVectorXd sd = ((X.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(X.rows()))
                                .sqrt()
                                .matrix();
    for (Eigen::Index j = 0; j < sd.size(); ++j)
        if (!(sd(j) > 1e-12)) sd(j) = 1.0;
    const double s = 1.0 / std::sqrt(static_cast<double>(D));
    X = ((X.rowwise() - mean).array().rowwise() / sd.array()).matrix() * s;
    Xt = ((Xt.rowwise() - mean).array().rowwise() / sd.array()).matrix() * s;

    const std::int64_t n = X.rows();
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(D, classes), VW = W;
    Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(classes), Vb = b;
    const std::int64_t per_epoch = (n + config.batch_size - 1) / config.batch_size;
    const double total = static_cast<double>(per_epoch * config.epochs);
    std::int64_t it = 0;
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng rng(config.seed, streams::probe, static_cast<std::uint64_t>(epoch) + 1);
        for (std::int64_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(0, i + 1)]);
        for (std::int64_t start = 0; start < n; start += config.batch_size, ++it) {
            const std::int64_t nb = std::min<std::int64_t>(config.batch_size, n - start);
            Eigen::MatrixXd xb(nb, D);
            Eigen::MatrixXd y = Eigen::MatrixXd::Zero(nb, classes);
            for (std::int64_t r = 0; r < nb; ++r) {
                const auto src = order[start + r];
                xb.row(r) = X.row(src);
                y(r, train_labels[src]) = 1.0;
            }
            Eigen::MatrixXd logits = (xb * W).rowwise() + b;
            for (Eigen::Index r = 0; r < logits.rows(); ++r) {
                const double mx = logits.row(r).maxCoeff();
                logits.row(r) = (logits.row(r).array() - mx).exp().matrix();
                logits.row(r) /= logits.row(r).sum();
            }
            const Eigen::MatrixXd g = (logits - y) / static_cast<double>(nb);
            const double lr = 0.5 * config.learning_rate * (1.0 + std::cos(std::numbers::pi * it / total));
            VW = config.momentum * VW + xb.transpose() * g + config.weight_decay * W;
            Vb = config.momentum * Vb + g.colwise().sum();
            W -= lr * VW;
            b -= lr * Vb;
        }
    }

    const Eigen::MatrixXd scores = (Xt * W).rowwise() + b;
    std::int64_t correct = 0;
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        Eigen::Index arg = 0;
        scores.row(r).maxCoeff(&arg);
        if (arg == test_labels[static_cast<std::size_t>(r)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(scores.rows());
}

PcaResult pca_project(const Tensor& features, int k) {
    if (features.rank() != 2) throw std::invalid_argument("pca_project: features must be [N, D]");
    const std::int64_t n = features.dim(0), d = features.dim(1);
    if (k < 1 || k > std::min(n, d)) throw std::invalid_argument("pca_project: k must lie in [1, min(N, D)]");
    if (n < 2) throw std::invalid_argument("pca_project: need at least two samples");
    const Eigen::MatrixXd X = to_eigen(features);
    const Eigen::RowVectorXd mean = X.colwise().mean();
    const Eigen::MatrixXd C = X.rowwise() - mean;
    const Eigen::MatrixXd cov = (C.transpose() * C) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw std::runtime_error("pca_project: eigendecomposition failed");

    const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
    const double total = cov.trace();
    PcaResult out;
    out.mean = from_eigen(mean);
    out.mean = out.mean.reshaped({d});
    Eigen::MatrixXd V(d, k);
    for (int i = 0; i < k; ++i) {
        const Eigen::Index src = d - 1 - i;  // eigenvalues ascend
        Eigen::VectorXd v = es.eigenvectors().col(src);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        V.col(i) = v;
        out.explained_variance_ratio.push_back(total > 0.0 ? std::min(1.0, ev(src) / total) : 0.0);
    }
    out.components = from_eigen(V.transpose());
    out.projected = from_eigen(C * V);
    return out;
}

double frechet_gaussian_distance(const Tensor& a, const Tensor& b, double shrinkage) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
        throw std::invalid_argument("frechet_gaussian_distance: inputs must be [N, D] with matching D");
    if (shrinkage < 0.0) throw std::invalid_argument("frechet_gaussian_distance: negative shrinkage");
    const Eigen::MatrixXd A = to_eigen(a), B = to_eigen(b);
    const Eigen::VectorXd mu = A.colwise().mean().transpose() - B.colwise().mean().transpose();
    const auto I = Eigen::MatrixXd::Identity(A.cols(), A.cols());
    const Eigen::MatrixXd Sa = sample_covariance(A) + shrinkage * I;
    const Eigen::MatrixXd Sb = sample_covariance(B) + shrinkage * I;
    const Eigen::MatrixXd ra = sqrtm_psd(Sa);
    const double cross = sqrtm_psd(ra * Sb * ra).trace();
    const double d = mu.squaredNorm() + Sa.trace() + Sb.trace() - 2.0 * cross;
    return std::max(0.0, d);
}

Tensor flatten_images(const Tensor& images) {
    if (images.rank() < 1) throw std::invalid_argument("flatten_images: scalar input");
    const std::int64_t n = images.dim(0);
    return images.reshaped({n, n == 0 ? 0 : images.numel() / n});
}

Tensor random_projection_features(const Tensor& images, int dim, std::uint64_t seed) {
    const Tensor flat = flatten_images(images);
    const std::int64_t p = flat.dim(1);
    Tensor R({p, dim});
    Rng rng(seed, streams::projection, 1);
    const double s = 1.0 / std::sqrt(static_cast<double>(p));
    for (auto& v : R.values()) v = s * rng.normal();
    Tensor out({flat.dim(0), dim});
    as_matrix(out, dim) = as_matrix(flat, p) * as_matrix(R, dim);
    return out;
}

FrechetProxy frechet_proxy(const Tensor& samples, const Tensor& reference, std::uint64_t seed) {
    return {frechet_gaussian_distance(flatten_images(samples), flatten_images(reference)),
            frechet_gaussian_distance(random_projection_features(samples, 64, seed),
                                      random_projection_features(reference, 64, seed))};
}

double AnalysisReport::accuracy(const std::string& weights, int layer, double timestep) const {
    for (const auto& c : cells)
        if (c.weights == weights && c.layer == layer && c.timestep == timestep) return c.accuracy;
    throw std::out_of_range("no probe cell for " + weights + " layer " + std::to_string(layer) + " t " +
                            format_time(timestep));
}

AnalysisReport analyze_models(const std::vector<std::pair<std::string, DiffusionTransformer*>>& models,
                              const ForwardProcess& process, const ShapesDataset& data,
                              const AnalysisConfig& config, bool with_pca) {
    AnalysisReport report;
    report.metadata = {{"num_samples", data.size()}, {"seed", config.seed}, {"layers", config.layers},
                       {"timesteps", config.timesteps}};
    if (config.layers.empty() || config.timesteps.empty()) return report;
    const std::set<int> layers(config.layers.begin(), config.layers.end());
    for (const auto& [name, model] : models) {
        for (double t : config.timesteps) {
            const auto feats = extract_features(*model, process, data.images, layers, t, config.seed);
            for (int l : layers) {
                const Tensor& f = feats.at(l);
                ProbeConfig pc = config.probe;
                pc.tap_layer = l;
                pc.probe_timestep = t;
                report.cells.push_back({name, l, t, linear_probe(f, data.labels, pc)});
                if (with_pca) {
                    const int k = static_cast<int>(std::min<std::int64_t>({config.pca_components, f.dim(0), f.dim(1)}));
                    report.pca.push_back({name, l, t, pca_project(f, k), data.labels});
                }
            }
        }
    }
    return report;
}

AnalysisReport analyze_checkpoint(TrainState& state, const ShapesDataset& data, const AnalysisConfig& config,
                                  bool with_pca) {
    std::vector<std::pair<std::string, DiffusionTransformer*>> models{{"student", &state.student}};
    if (config.include_teacher) models.emplace_back("teacher", &state.teacher.model());
    auto report = analyze_models(models, state.process, data, config, with_pca);
    report.metadata["step"] = state.step;
    return report;
}

void write_analysis(const AnalysisReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream csv(dir / "probe_report.csv");
        csv << "weights,layer,timestep,accuracy\n";
        csv.precision(17);
        for (const auto& c : report.cells)
            csv << c.weights << ',' << c.layer << ',' << format_time(c.timestep) << ',' << c.accuracy << '\n';
        if (!csv) throw std::runtime_error("failed writing probe_report.csv");
    }
    nlohmann::json j = {{"metadata", report.metadata}, {"cells", nlohmann::json::array()}, {"pca", nlohmann::json::array()}};
    for (const auto& c : report.cells)
        j["cells"].push_back({{"weights", c.weights}, {"layer", c.layer}, {"timestep", c.timestep}, {"accuracy", c.accuracy}});
    for (const auto& p : report.pca) {
        const std::string file =
            "pca_" + p.weights + "_layer" + std::to_string(p.layer) + "_t" + format_time(p.timestep) + ".sra";
        TensorArchive ar;
        ar.metadata() = {{"kind", "pca"}, {"weights", p.weights}, {"layer", p.layer}, {"timestep", p.timestep}};
        ar.put("mean", p.pca.mean);
        ar.put("components", p.pca.components);
        ar.put("projected", p.pca.projected);
        ar.put("explained_variance_ratio",
               Tensor({static_cast<std::int64_t>(p.pca.explained_variance_ratio.size())}, p.pca.explained_variance_ratio));
        ar.put("labels", IntTensor{{static_cast<std::int64_t>(p.labels.size())}, {p.labels.begin(), p.labels.end()}});
        ar.save(dir / file);
        j["pca"].push_back({{"file", file},
                            {"weights", p.weights},
                            {"layer", p.layer},
                            {"timestep", p.timestep},
                            {"explained_variance_ratio", p.pca.explained_variance_ratio}});
    }
    std::ofstream out(dir / "report.json");
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("failed writing report.json");
}

}  // namespace sra
