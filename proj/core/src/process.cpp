#include "sra/process.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sra {

std::string to_string(Family f) { return f == Family::continuous_flow ? "flow" : "denoise"; }

std::string to_string(InterpolantKind k) { return k == InterpolantKind::linear ? "linear" : "vp"; }

Family parse_family(const std::string& s) {
    if (s == "flow" || s == "continuous_flow") return Family::continuous_flow;
    if (s == "denoise" || s == "discrete_denoise") return Family::discrete_denoise;
    throw std::invalid_argument("unknown family '" + s + "' (expected flow or denoise)");
}

InterpolantKind parse_interpolant(const std::string& s) {
    if (s == "linear") return InterpolantKind::linear;
    if (s == "vp" || s == "variance_preserving") return InterpolantKind::variance_preserving;
    throw std::invalid_argument("unknown interpolant '" + s + "' (expected linear or vp)");
}

namespace {
constexpr double kHalfPi = std::numbers::pi / 2.0;

void require_unit_time(double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::out_of_range("time " + std::to_string(t) + " outside [0, 1]");
}
}  // namespace

double Interpolant::alpha(double t) const {
    return kind_ == InterpolantKind::linear ? 1.0 - t : std::cos(kHalfPi * t);
}

double Interpolant::sigma(double t) const { return kind_ == InterpolantKind::linear ? t : std::sin(kHalfPi * t); }

double Interpolant::alpha_dot(double t) const {
    return kind_ == InterpolantKind::linear ? -1.0 : -kHalfPi * std::sin(kHalfPi * t);
}

double Interpolant::sigma_dot(double t) const {
    return kind_ == InterpolantKind::linear ? 1.0 : kHalfPi * std::cos(kHalfPi * t);
}

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
    if (betas_.empty()) throw std::invalid_argument("noise schedule needs at least one step");
    alpha_bars_.resize(betas_.size());
    double prod = 1.0;
    for (std::size_t i = 0; i < betas_.size(); ++i) {
        if (!(betas_[i] > 0.0 && betas_[i] < 1.0))
            throw std::invalid_argument("beta[" + std::to_string(i) + "] = " + std::to_string(betas_[i]) +
                                        " outside (0, 1)");
        prod *= 1.0 - betas_[i];
        alpha_bars_[i] = prod;
    }
}

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
    if (steps < 1) throw std::invalid_argument("noise schedule needs at least one step");
    std::vector<double> b(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i)
        b[i] = steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * i / static_cast<double>(steps - 1);
    return NoiseSchedule(std::move(b));
}

NoiseSchedule NoiseSchedule::constant(int steps, double beta) {
    if (steps < 1) throw std::invalid_argument("noise schedule needs at least one step");
    return NoiseSchedule(std::vector<double>(static_cast<std::size_t>(steps), beta));
}

Tensor interpolant_sample(const Interpolant& path, const Tensor& x0, const Tensor& eps, double t) {
    require_same_shape(x0, eps, "interpolant_sample");
    require_unit_time(t);
    const double a = path.alpha(t), s = path.sigma(t);
    Tensor out(x0.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a * x0[i] + s * eps[i];
    return out;
}

Tensor velocity_target(const Interpolant& path, const Tensor& x0, const Tensor& eps, double t) {
    require_same_shape(x0, eps, "velocity_target");
    require_unit_time(t);
    const double a = path.alpha_dot(t), s = path.sigma_dot(t);
    Tensor out(x0.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a * x0[i] + s * eps[i];
    return out;
}

Tensor ddpm_forward_marginal(const NoiseSchedule& schedule, const Tensor& x0, const Tensor& eps, int t) {
    require_same_shape(x0, eps, "ddpm_forward_marginal");
    if (t < 0 || t >= schedule.steps())
        throw std::out_of_range("timestep " + std::to_string(t) + " outside [0, " + std::to_string(schedule.steps()) +
                                ")");
    const double a = std::sqrt(schedule.alpha_bar(t)), s = std::sqrt(1.0 - schedule.alpha_bar(t));
    Tensor out(x0.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a * x0[i] + s * eps[i];
    return out;
}

double noise_prediction_loss(const Tensor& predicted_eps, const Tensor& true_eps) {
    require_same_shape(predicted_eps, true_eps, "noise_prediction_loss");
    if (predicted_eps.numel() == 0) throw std::invalid_argument("noise_prediction_loss: empty tensors");
    double s = 0.0;
    for (std::int64_t i = 0; i < predicted_eps.numel(); ++i) {
        const double d = predicted_eps[i] - true_eps[i];
        s += d * d;
    }
    return s / static_cast<double>(predicted_eps.numel());
}

double velocity_loss(const Tensor& predicted_v, const Tensor& target_v) {
    return noise_prediction_loss(predicted_v, target_v);
}

double sample_timestep(Family family, int num_timesteps, Rng& rng) {
    if (family == Family::continuous_flow) return rng.uniform();
    return static_cast<double>(rng.uniform_int(0, num_timesteps));
}

double teacher_timestep(const TimeSpec& spec, double t, double k) {
    if (k < 0.0) throw std::invalid_argument("time interval k must be nonnegative, got " + std::to_string(k));
    if (k > spec.k_max)
        throw std::invalid_argument("time interval k = " + std::to_string(k) + " exceeds k_max = " +
                                    std::to_string(spec.k_max));
    if (spec.family == Family::discrete_denoise) {
        const auto ti = static_cast<std::int64_t>(std::llround(t));
        const auto ki = static_cast<std::int64_t>(std::llround(k));
        if (static_cast<double>(ti) != t || static_cast<double>(ki) != k)
            throw std::invalid_argument("discrete family needs integer t and k");
        return static_cast<double>(std::max<std::int64_t>(ti - ki, 0));
    }
    return std::max(t - k, 0.0);
}

ForwardProcess::ForwardProcess(ProcessConfig config)
    : config_(config),
      interpolant_(config.interpolant),
      schedule_(NoiseSchedule::linear(config.num_timesteps, config.beta_start, config.beta_end)) {}

void ForwardProcess::validate_time(double t) const {
    if (config_.family == Family::continuous_flow) {
        require_unit_time(t);
    } else if (!(t >= 0.0 && t < config_.num_timesteps) || std::floor(t) != t) {
        throw std::out_of_range("timestep " + std::to_string(t) + " is not an integer in [0, " +
                                std::to_string(config_.num_timesteps) + ")");
    }
}

double ForwardProcess::model_time(double t) const {
    return config_.family == Family::continuous_flow ? 1000.0 * t : t * (1000.0 / config_.num_timesteps);
}

std::vector<double> ForwardProcess::model_times(std::span<const double> t) const {
    std::vector<double> out(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = model_time(t[i]);
    return out;
}

namespace {
template <typename Coef>
Tensor per_sample_combine(const Tensor& x0, const Tensor& eps, std::span<const double> t, Coef coef) {
    if (x0.rank() == 0 || static_cast<std::size_t>(x0.dim(0)) != t.size())
        throw std::invalid_argument("need one time value per sample");
    const std::int64_t per = x0.numel() / x0.dim(0);
    Tensor out(x0.shape());
    for (std::size_t b = 0; b < t.size(); ++b) {
        const auto [a, s] = coef(t[b]);
        for (std::int64_t i = 0; i < per; ++i) {
            const auto idx = static_cast<std::int64_t>(b) * per + i;
            out[idx] = a * x0[idx] + s * eps[idx];
        }
    }
    return out;
}
}  // namespace

Tensor ForwardProcess::noised(const Tensor& x0, const Tensor& eps, std::span<const double> t) const {
    require_same_shape(x0, eps, "noised");
    return per_sample_combine(x0, eps, t, [this](double tt) {
        validate_time(tt);
        if (config_.family == Family::continuous_flow)
            return std::pair{interpolant_.alpha(tt), interpolant_.sigma(tt)};
        const double ab = schedule_.alpha_bar(static_cast<int>(tt));
        return std::pair{std::sqrt(ab), std::sqrt(1.0 - ab)};
    });
}

Tensor ForwardProcess::target(const Tensor& x0, const Tensor& eps, std::span<const double> t) const {
    require_same_shape(x0, eps, "target");
    return per_sample_combine(x0, eps, t, [this](double tt) {
        validate_time(tt);
        if (config_.family == Family::continuous_flow)
            return std::pair{interpolant_.alpha_dot(tt), interpolant_.sigma_dot(tt)};
        return std::pair{0.0, 1.0};
    });
}

}  // namespace sra
