#include "sra/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "sra/rng.hpp"

namespace sra {
namespace {

// Each sample draws from its own stream so results do not depend on batching.
std::vector<Rng> sample_streams(const SampleConfig& config) {
    std::vector<Rng> out;
    out.reserve(static_cast<std::size_t>(config.num_samples));
    for (int i = 0; i < config.num_samples; ++i) out.emplace_back(config.seed, streams::sample, i);
    return out;
}

void fill_normal(Tensor& x, std::vector<Rng>& rngs) {
    const std::int64_t per = x.numel() / static_cast<std::int64_t>(rngs.size());
    for (std::size_t i = 0; i < rngs.size(); ++i)
        for (std::int64_t j = 0; j < per; ++j) x[i * per + j] = rngs[i].normal();
}

Shape batch_shape(const SampleConfig& config, const Shape& sample_shape) {
    Shape s{config.num_samples};
    s.insert(s.end(), sample_shape.begin(), sample_shape.end());
    return s;
}

Tensor guided(const Predictor& model, const Tensor& x, std::span<const double> t, const SampleConfig& config,
              int null_class) {
    const auto n = static_cast<std::size_t>(x.dim(0));
    const int label = config.class_id < 0 ? null_class : config.class_id;
    std::vector<int> cond(n, label);
    Tensor out = model(x, t, cond);
    if (config.guidance_scale != 1.0 && label != null_class) {
        std::vector<int> uncond(n, null_class);
        out = cfg_combine(out, model(x, t, uncond), config.guidance_scale);
    }
    return out;
}

}  // namespace

std::string to_string(SdeMode m) { return m == SdeMode::ode ? "ode" : "sde_wt_sigma"; }

SdeMode parse_sde_mode(const std::string& s) {
    if (s == "ode") return SdeMode::ode;
    if (s == "sde_wt_sigma" || s == "sde") return SdeMode::sde_wt_sigma;
    throw std::invalid_argument("unknown sde mode '" + s + "'");
}

void SampleConfig::validate() const {
    if (num_steps < 1) throw std::invalid_argument("sample.num_steps must be at least 1");
    if (!(guidance_scale >= 1.0)) throw std::invalid_argument("sample.guidance_scale must be >= 1");
    if (num_samples < 1) throw std::invalid_argument("sample.num_samples must be at least 1");
    if (class_id < -1) throw std::invalid_argument("sample.class_id must be -1 or a class label");
}

Predictor model_predictor(DiffusionTransformer& model, const ForwardProcess& process) {
    return [&model, &process](const Tensor& x, std::span<const double> t, std::span<const int> ids) {
        return model.predict(x, process.model_times(t), ids);
    };
}

Tensor cfg_combine(const Tensor& cond, const Tensor& uncond, double w) {
    require_same_shape(cond, uncond, "cfg_combine");
    if (w == 1.0) return cond;  // u + (c - u) is not always c in floating point
    Tensor out(cond.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = uncond[i] + w * (cond[i] - uncond[i]);
    return out;
}

std::vector<int> respaced_timesteps(int num_timesteps, int num_steps) {
    if (num_steps < 1 || num_steps > num_timesteps)
        throw std::invalid_argument("num_steps must lie in [1, num_timesteps]");
    if (num_steps == 1) return {num_timesteps - 1};
    std::vector<int> out;
    for (int i = 0; i < num_steps; ++i)
        out.push_back(static_cast<int>(std::lround(static_cast<double>(i) * (num_timesteps - 1) / (num_steps - 1))));
    return out;
}

Tensor ddpm_sample(const Predictor& model, const NoiseSchedule& schedule, const SampleConfig& config,
                   const Shape& sample_shape, int null_class) {
    config.validate();
    const auto steps = respaced_timesteps(schedule.steps(), config.num_steps);
    auto rngs = sample_streams(config);
    Tensor x(batch_shape(config, sample_shape));
    fill_normal(x, rngs);
    Tensor z(x.shape());
    for (int i = static_cast<int>(steps.size()) - 1; i >= 0; --i) {
        const int t = steps[static_cast<std::size_t>(i)];
        const double abar = schedule.alpha_bar(t);
        const double abar_prev = i > 0 ? schedule.alpha_bar(steps[static_cast<std::size_t>(i - 1)]) : 1.0;
        const double alpha = abar / abar_prev;
        const double beta = 1.0 - alpha;
        const std::vector<double> tt(static_cast<std::size_t>(config.num_samples), static_cast<double>(t));
        const Tensor eps = guided(model, x, tt, config, null_class);

        const double c = beta / std::sqrt(1.0 - abar);
        const double inv = 1.0 / std::sqrt(alpha);
        for (std::int64_t j = 0; j < x.numel(); ++j) x[j] = inv * (x[j] - c * eps[j]);
        if (i > 0) {
            const double var = (1.0 - abar_prev) / (1.0 - abar) * beta;
            const double sd = std::sqrt(var);
            fill_normal(z, rngs);
            for (std::int64_t j = 0; j < x.numel(); ++j) x[j] += sd * z[j];
        }
    }
    return x;
}

double score_from_velocity(const Interpolant& path, double v, double x, double t) {
    const double a = path.alpha(t), s = path.sigma(t);
    const double ad = path.alpha_dot(t), sd = path.sigma_dot(t);
    return (a * v - ad * x) / (s * (ad * s - a * sd));
}

Tensor euler_maruyama_sample(const Predictor& model, const Interpolant& path, const SampleConfig& config,
                             const Shape& sample_shape, int null_class,
                             const std::function<double(double)>& diffusion) {
    config.validate();
    auto rngs = sample_streams(config);
    Tensor x(batch_shape(config, sample_shape));
    fill_normal(x, rngs);

    const int n = config.num_steps;
    const double h = 1.0 / n;
    const bool stochastic = config.sde_mode != SdeMode::ode;
    Tensor z(x.shape());
    for (int j = 0; j < n; ++j) {
        const double t = 1.0 - static_cast<double>(j) / n;
        const std::vector<double> tt(static_cast<std::size_t>(config.num_samples), t);
        const Tensor v = guided(model, x, tt, config, null_class);
        // The last step and anything below one grid cell stay deterministic:
        // the score identity is singular as sigma_t -> 0.
        const bool last = j == n - 1 || t < h;
        if (!stochastic || last) {
            for (std::int64_t i = 0; i < x.numel(); ++i) x[i] -= h * v[i];
            continue;
        }
        const double w = diffusion ? diffusion(t) : path.sigma(t);
        if (w < 0.0) throw std::invalid_argument("diffusion coefficient must be nonnegative");
        for (std::int64_t i = 0; i < x.numel(); ++i) {
            const double s = score_from_velocity(path, v[i], x[i], t);
            x[i] -= h * (v[i] - 0.5 * w * s);
        }
        if (w > 0.0) {
            fill_normal(z, rngs);
            const double sd = std::sqrt(w * h);
            for (std::int64_t i = 0; i < x.numel(); ++i) x[i] += sd * z[i];
        }
    }
    return x;
}

Tensor generate_samples(const Predictor& model, const ForwardProcess& process, const SampleConfig& config,
                        const Shape& sample_shape, int null_class) {
    if (config.family != process.family())
        throw std::invalid_argument("sampler family '" + to_string(config.family) + "' does not match the model's '" +
                                    to_string(process.family()) + "'");
    if (process.family() == Family::discrete_denoise)
        return ddpm_sample(model, process.schedule(), config, sample_shape, null_class);
    return euler_maruyama_sample(model, process.interpolant(), config, sample_shape, null_class);
}

void write_image_grid(const Tensor& samples, const std::string& path, int columns, int max_images) {
    if (samples.rank() != 4) throw std::invalid_argument("write_image_grid expects [B, C, H, W]");
    const auto count = static_cast<int>(std::min<std::int64_t>(samples.dim(0), max_images));
    const auto h = static_cast<int>(samples.dim(2)), w = static_cast<int>(samples.dim(3));
    const std::int64_t per = samples.numel() / std::max<std::int64_t>(1, samples.dim(0));
    const int cols = std::max(1, std::min(columns, count));
    const int rows = (count + cols - 1) / cols;
    const int pad = 1;
    const int gw = cols * (w + pad) + pad, gh = rows * (h + pad) + pad;
    std::vector<unsigned char> pixels(static_cast<std::size_t>(gw) * gh, 0);
    for (int k = 0; k < count; ++k) {
        const int oy = pad + (k / cols) * (h + pad), ox = pad + (k % cols) * (w + pad);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double v = samples[k * per + y * w + x];
                const double u = std::clamp((v + 1.0) * 127.5, 0.0, 255.0);
                pixels[static_cast<std::size_t>(oy + y) * gw + ox + x] = static_cast<unsigned char>(std::lround(u));
            }
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "P5\n" << gw << ' ' << gh << "\n255\n";
    out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace sra
