#pragma once

// Forward-process math shared by the flow (stochastic interpolant) and
// denoise (discrete DDPM) model families.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sra/rng.hpp"
#include "sra/tensor.hpp"

namespace sra {

enum class Family { continuous_flow, discrete_denoise };
enum class InterpolantKind { linear, variance_preserving };

std::string to_string(Family f);
std::string to_string(InterpolantKind k);
Family parse_family(const std::string& s);
InterpolantKind parse_interpolant(const std::string& s);

/// x_t = alpha(t) x0 + sigma(t) eps on t in [0, 1], with alpha(0) = sigma(1) = 1
/// and alpha(1) = sigma(0) = 0.
///   linear: alpha = 1 - t,        sigma = t
///   vp:     alpha = cos(pi t / 2), sigma = sin(pi t / 2)
class Interpolant {
public:
    explicit Interpolant(InterpolantKind kind = InterpolantKind::linear) : kind_(kind) {}

    InterpolantKind kind() const { return kind_; }
    double alpha(double t) const;
    double sigma(double t) const;
    double alpha_dot(double t) const;
    double sigma_dot(double t) const;

private:
    InterpolantKind kind_;
};

/// Discrete variance schedule. Index t in [0, T) denotes the state after
/// t + 1 noising steps, so alpha_bar(0) = 1 - beta(0).
class NoiseSchedule {
public:
    explicit NoiseSchedule(std::vector<double> betas);
    static NoiseSchedule linear(int steps = 1000, double beta_start = 1e-4, double beta_end = 0.02);
    static NoiseSchedule constant(int steps, double beta);

    int steps() const { return static_cast<int>(betas_.size()); }
    double beta(int t) const { return betas_.at(static_cast<std::size_t>(t)); }
    double alpha(int t) const { return 1.0 - beta(t); }
    double alpha_bar(int t) const { return alpha_bars_.at(static_cast<std::size_t>(t)); }
    const std::vector<double>& betas() const { return betas_; }
    const std::vector<double>& alpha_bars() const { return alpha_bars_; }

private:
    std::vector<double> betas_;
    std::vector<double> alpha_bars_;
};

/// Time domain for a family plus the teacher interval bound.
struct TimeSpec {
    Family family = Family::continuous_flow;
    double k_max = 0.2;
    int num_timesteps = 1000;  // discrete family only
};

Tensor interpolant_sample(const Interpolant& path, const Tensor& x0, const Tensor& eps, double t);
Tensor velocity_target(const Interpolant& path, const Tensor& x0, const Tensor& eps, double t);
Tensor ddpm_forward_marginal(const NoiseSchedule& schedule, const Tensor& x0, const Tensor& eps, int t);

/// Mean over all elements of the squared difference.
double noise_prediction_loss(const Tensor& predicted_eps, const Tensor& true_eps);
double velocity_loss(const Tensor& predicted_v, const Tensor& target_v);

/// Uniform on [0, 1) for flow, uniform integer on [0, T) for denoise.
double sample_timestep(Family family, int num_timesteps, Rng& rng);

/// max(t - k, 0); integer arithmetic for the discrete family.
double teacher_timestep(const TimeSpec& spec, double t, double k);

struct ProcessConfig {
    Family family = Family::continuous_flow;
    InterpolantKind interpolant = InterpolantKind::linear;
    int num_timesteps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    bool operator==(const ProcessConfig&) const = default;
};

/// Batched forward process: tensors carry the batch on axis 0 and each
/// sample has its own time value.
class ForwardProcess {
public:
    explicit ForwardProcess(ProcessConfig config = {});

    const ProcessConfig& config() const { return config_; }
    Family family() const { return config_.family; }
    const Interpolant& interpolant() const { return interpolant_; }
    const NoiseSchedule& schedule() const { return schedule_; }

    Tensor noised(const Tensor& x0, const Tensor& eps, std::span<const double> t) const;
    /// Regression target: eps for denoise, velocity for flow.
    Tensor target(const Tensor& x0, const Tensor& eps, std::span<const double> t) const;
    double sample_time(Rng& rng) const { return sample_timestep(config_.family, config_.num_timesteps, rng); }
    /// Value fed to the network's timestep embedder: both families map
    /// their time domain onto [0, 1000).
    double model_time(double t) const;
    std::vector<double> model_times(std::span<const double> t) const;
    /// Throws when t lies outside the family's domain.
    void validate_time(double t) const;

private:
    ProcessConfig config_;
    Interpolant interpolant_;
    NoiseSchedule schedule_;
};

/// One training minibatch with its sampled noising realisation.
struct TrainBatch {
    Tensor x0;                   // [B, C, H, W]
    std::vector<int> class_ids;  // after label dropout
    std::vector<double> t;       // family time per sample
    Tensor eps;                  // same shape as x0
};

}  // namespace sra
