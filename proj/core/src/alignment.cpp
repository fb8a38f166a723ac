#include "sra/alignment.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sra {

std::string to_string(DistanceKernel k) {
    switch (k) {
        case DistanceKernel::smooth_l1: return "smooth_l1";
        case DistanceKernel::l2: return "l2";
        case DistanceKernel::l1: return "l1";
    }
    return "?";
}

DistanceKernel parse_distance(const std::string& s) {
    if (s == "smooth_l1") return DistanceKernel::smooth_l1;
    if (s == "l2") return DistanceKernel::l2;
    if (s == "l1") return DistanceKernel::l1;
    throw std::invalid_argument("unknown distance '" + s + "' (expected smooth_l1, l2 or l1)");
}

std::string to_string(EmaSchedule s) { return s == EmaSchedule::constant ? "constant" : "cosine"; }

EmaSchedule parse_ema_schedule(const std::string& s) {
    if (s == "constant") return EmaSchedule::constant;
    if (s == "cosine") return EmaSchedule::cosine;
    throw std::invalid_argument("unknown EMA schedule '" + s + "' (expected constant or cosine)");
}

void SraConfig::validate(int depth) const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("SraConfig: " + m); };
    if (student_layer < 1 || teacher_layer > depth)
        fail("layers " + std::to_string(student_layer) + "->" + std::to_string(teacher_layer) + " outside [1, " +
             std::to_string(depth) + "]");
    if (student_layer > teacher_layer)
        fail("student layer " + std::to_string(student_layer) + " must not exceed teacher layer " +
             std::to_string(teacher_layer));
    if (!(k_max >= 0.0)) fail("k_max must be nonnegative");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail("lambda must be a finite nonnegative number");
    if (!(ema_alpha >= 0.0 && ema_alpha < 1.0)) fail("ema_alpha must lie in [0, 1)");
    if (!(ema_alpha_start >= 0.0 && ema_alpha_start < 1.0)) fail("ema_alpha_start must lie in [0, 1)");
    if (distance == DistanceKernel::smooth_l1 && !(smooth_l1_beta > 0.0)) fail("smooth_l1_beta must be positive");
}

SraConfig SraConfig::defaults_for(Family family, int depth) {
    SraConfig c;
    const auto scaled = [depth](int ref) { return std::max(1, static_cast<int>(std::lround(depth * ref / 12.0))); };
    c.student_layer = scaled(3);
    c.teacher_layer = std::max(c.student_layer, scaled(family == Family::continuous_flow ? 8 : 7));
    c.k_max = family == Family::continuous_flow ? 0.2 : 200.0;
    return c;
}

double ema_alpha_at(const SraConfig& config, std::int64_t step, std::int64_t total_steps) {
    if (config.ema_schedule == EmaSchedule::constant || total_steps <= 0) return config.ema_alpha;
    const double frac = std::clamp(static_cast<double>(step) / static_cast<double>(total_steps), 0.0, 1.0);
    return 1.0 - (1.0 - config.ema_alpha_start) * (std::cos(std::numbers::pi * frac) + 1.0) / 2.0;
}

ProjectionHead::ProjectionHead(int dim, std::uint64_t seed, bool zero_output) : dim_(dim) {
    if (dim <= 0) throw std::invalid_argument("projection head dim must be positive");
    Rng rng(seed, streams::projection);
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    auto uniform = [&](Shape s) {
        Tensor t(std::move(s));
        for (auto& v : t.values()) v = (2.0 * rng.uniform() - 1.0) * bound;
        return t;
    };
    params_.add("fc1.weight", uniform({dim, dim}));
    params_.add("fc1.bias", uniform({dim}));
    params_.add("fc2.weight", zero_output ? Tensor(Shape{dim, dim}) : uniform({dim, dim}));
    params_.add("fc2.bias", zero_output ? Tensor(Shape{dim}) : uniform({dim}));
}

ag::Var ProjectionHead::forward(ag::Tape& tape, const ag::Var& tap) {
    if (tap.value().rank() == 0 || tap.shape().back() != dim_)
        throw std::invalid_argument("projection head expects trailing dim " + std::to_string(dim_) + ", got " +
                                    shape_string(tap.shape()));
    auto h = ag::linear(tape, tap, tape.parameter(params_[0]), tape.parameter(params_[1]));
    h = ag::silu(tape, h);
    return ag::linear(tape, h, tape.parameter(params_[2]), tape.parameter(params_[3]));
}

void ema_update(ParamStore& teacher, const ParamStore& student, double alpha) {
    teacher.require_structurally_equal(student, "ema_update");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("ema_update: alpha outside [0, 1]");
    const double beta = 1.0 - alpha;
    for (std::size_t i = 0; i < teacher.size(); ++i) {
        auto& t = teacher[i].value;
        const auto& s = student[i].value;
        for (std::int64_t j = 0; j < t.numel(); ++j) t[j] = alpha * t[j] + beta * s[j];
    }
}

void TeacherState::update(const DiffusionTransformer& student, double alpha) {
    ema_update(model_.params(), student.params(), alpha);
    ++updates_;
}

double alignment_loss(const Tensor& teacher_tap, const Tensor& projected_student, DistanceKernel kernel,
                      double beta) {
    ag::Tape tape(ag::Tape::Mode::no_grad);
    return alignment_loss(tape, tape.constant_ref(teacher_tap), tape.constant_ref(projected_student), kernel, beta)
        .item();
}

ag::Var alignment_loss(ag::Tape& tape, const ag::Var& teacher_tap, const ag::Var& projected_student,
                       DistanceKernel kernel, double beta) {
    if (teacher_tap.requires_grad())
        throw std::logic_error("alignment_loss: teacher tap must not carry gradients");
    require_same_shape(teacher_tap.value(), projected_student.value(), "alignment_loss");
    // Every patch has the same channel count, so the mean of per-patch means
    // equals the mean over all elements.
    return ag::mean_distance(tape, projected_student, teacher_tap, kernel, beta);
}

double joint_loss(double gen_loss, double align_loss, double lambda) {
    if (!std::isfinite(gen_loss) || !std::isfinite(align_loss))
        throw std::domain_error("non-finite loss (gen " + std::to_string(gen_loss) + ", align " +
                                std::to_string(align_loss) + ")");
    return gen_loss + lambda * align_loss;
}

ag::Var joint_loss(ag::Tape& tape, const ag::Var& gen_loss, const ag::Var& align_loss, double lambda) {
    joint_loss(gen_loss.item(), align_loss.item(), lambda);
    return ag::add_scaled(tape, gen_loss, align_loss, lambda);
}

std::vector<double> draw_intervals(const SraConfig& config, Family family, std::int64_t batch, Rng& rng) {
    auto one = [&] {
        const double u = rng.uniform();
        return family == Family::continuous_flow ? u * config.k_max : std::floor(u * config.k_max);
    };
    std::vector<double> k(static_cast<std::size_t>(batch));
    if (config.k_per_sample) {
        for (auto& v : k) v = one();
    } else {
        const double v = one();
        for (auto& x : k) x = v;
    }
    return k;
}

SraTargets sra_training_targets(ag::Tape& tape, DiffusionTransformer& student, TeacherState& teacher,
                                const ForwardProcess& process, const TrainBatch& batch, const SraConfig& config,
                                Rng& rng) {
    config.validate(student.config().depth);
    const std::int64_t B = batch.x0.dim(0);
    if (static_cast<std::int64_t>(batch.t.size()) != B || static_cast<std::int64_t>(batch.class_ids.size()) != B)
        throw std::invalid_argument("sra_training_targets: batch fields disagree on batch size");

    SraTargets out;
    out.k = draw_intervals(config, process.family(), B, rng);

    const TimeSpec spec{process.family(), config.k_max, process.config().num_timesteps};
    out.teacher_t.resize(static_cast<std::size_t>(B));
    for (std::int64_t i = 0; i < B; ++i) out.teacher_t[i] = teacher_timestep(spec, batch.t[i], out.k[i]);

    Tensor teacher_eps;
    if (!config.share_noise) {
        teacher_eps = Tensor(batch.eps.shape());
        for (auto& v : teacher_eps.values()) v = rng.normal();
    }

    const Tensor x_t = process.noised(batch.x0, batch.eps, batch.t);
    auto student_out = student.forward_with_taps(tape, x_t, process.model_times(batch.t), batch.class_ids,
                                                 {config.student_layer}, true);
    out.prediction = student_out.prediction;
    out.student_tap = student_out.taps.at(config.student_layer);

    const Tensor x_teacher =
        process.noised(batch.x0, config.share_noise ? batch.eps : teacher_eps, out.teacher_t);
    ag::Tape frozen(ag::Tape::Mode::no_grad);
    auto teacher_out = teacher.model().forward_with_taps(frozen, x_teacher, process.model_times(out.teacher_t),
                                                         batch.class_ids, {config.teacher_layer}, false);
    out.teacher_tap = tape.constant(teacher_out.taps.at(config.teacher_layer).value());
    return out;
}

}  // namespace sra
