#pragma once

// Ancestral DDPM sampling for the denoise family and Euler(-Maruyama)
// integration of the probability-flow ODE / reverse SDE for the flow family.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sra/backbone.hpp"
#include "sra/process.hpp"
#include "sra/tensor.hpp"

namespace sra {

enum class SdeMode {
    ode,           // deterministic Euler on the probability-flow ODE
    sde_wt_sigma,  // Euler-Maruyama with diffusion coefficient w_t = sigma_t
};

std::string to_string(SdeMode m);
SdeMode parse_sde_mode(const std::string& s);

struct SampleConfig {
    Family family = Family::continuous_flow;
    int num_steps = 250;
    double guidance_scale = 1.0;  // 1 disables guidance
    SdeMode sde_mode = SdeMode::sde_wt_sigma;
    std::uint64_t seed = 0;
    int num_samples = 16;
    int class_id = -1;  // -1 samples unconditionally (null label)

    void validate() const;
    bool operator==(const SampleConfig&) const = default;
};

/// Network output for a batch: x [B, ...], family times t (one per sample)
/// and labels. Returns noise (denoise family) or velocity (flow family).
using Predictor = std::function<Tensor(const Tensor& x, std::span<const double> t, std::span<const int> class_ids)>;

/// Wraps a model so it accepts family times. Holds references.
Predictor model_predictor(DiffusionTransformer& model, const ForwardProcess& process);

/// uncond + w (cond - uncond).
Tensor cfg_combine(const Tensor& cond, const Tensor& uncond, double w);

/// Evenly spaced subset of [0, T) used by the respaced sampler, ascending;
/// a single step uses {T - 1}.
std::vector<int> respaced_timesteps(int num_timesteps, int num_steps);

/// Ancestral sampling with fixed posterior variance. `sample_shape` is the
/// per-sample shape [C, H, W]; `null_class` is the label used for
/// unconditional and guidance passes.
Tensor ddpm_sample(const Predictor& model, const NoiseSchedule& schedule, const SampleConfig& config,
                   const Shape& sample_shape, int null_class);

/// s(x, t) recovered from a velocity prediction.
double score_from_velocity(const Interpolant& path, double v, double x, double t);

/// Integrates from t = 1 to t = 0 on a uniform grid. `diffusion` overrides
/// the w_t coefficient (the ode mode ignores it).
Tensor euler_maruyama_sample(const Predictor& model, const Interpolant& path, const SampleConfig& config,
                             const Shape& sample_shape, int null_class,
                             const std::function<double(double)>& diffusion = {});

/// Dispatches on the process family.
Tensor generate_samples(const Predictor& model, const ForwardProcess& process, const SampleConfig& config,
                        const Shape& sample_shape, int null_class);

/// 8-bit grayscale grid (binary PGM) of the first channel of up to `max_images`
/// samples mapped from [-1, 1].
void write_image_grid(const Tensor& samples, const std::string& path, int columns = 8, int max_images = 64);

}  // namespace sra
