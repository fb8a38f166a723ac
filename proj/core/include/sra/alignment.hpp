#pragma once

// Self-representation alignment: an EMA teacher, a projection head on the
// student branch, and the patch-wise distance between the student's
// early-layer/high-noise tap and the teacher's later-layer/lower-noise tap.

#include <cstdint>
#include <string>
#include <vector>

#include "sra/autograd.hpp"
#include "sra/backbone.hpp"
#include "sra/process.hpp"

namespace sra {

using ag::DistanceKernel;

std::string to_string(DistanceKernel k);
DistanceKernel parse_distance(const std::string& s);

enum class EmaSchedule {
    constant,  // alpha fixed for the whole run
    cosine,    // alpha rises from ema_alpha_start to 1 along a half cosine
};

std::string to_string(EmaSchedule s);
EmaSchedule parse_ema_schedule(const std::string& s);

struct SraConfig {
    int student_layer = 3;
    int teacher_layer = 8;
    double k_max = 0.2;  // family units: fraction of [0,1] for flow, steps for denoise
    double lambda = 0.2;
    double ema_alpha = 0.9999;
    bool use_projection_head = true;
    DistanceKernel distance = DistanceKernel::smooth_l1;
    double smooth_l1_beta = 1.0;
    bool k_per_sample = false;  // one interval per batch unless set
    bool share_noise = true;    // teacher input reuses the student's eps
    EmaSchedule ema_schedule = EmaSchedule::constant;
    double ema_alpha_start = 0.996;  // cosine schedule only

    /// Rejects m > n, layers outside [1, depth], negative lambda/k_max and
    /// alpha outside [0, 1).
    void validate(int depth) const;

    /// Layer pairs scaled from the 12-block reference (flow 3->8, denoise
    /// 3->7) and the family's default interval (0.2 or 200 steps).
    static SraConfig defaults_for(Family family, int depth);

    bool operator==(const SraConfig&) const = default;
};

/// EMA coefficient used after optimizer step `step` (1-based) of `total`.
double ema_alpha_at(const SraConfig& config, std::int64_t step, std::int64_t total_steps);

/// Two-layer MLP with a SiLU between, width-preserving, applied per token.
class ProjectionHead {
public:
    ProjectionHead(int dim, std::uint64_t seed, bool zero_output = false);

    int dim() const { return dim_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    ag::Var forward(ag::Tape& tape, const ag::Var& tap);

private:
    int dim_;
    ParamStore params_;
};

/// teacher <- alpha * teacher + (1 - alpha) * student, tensor by tensor.
void ema_update(ParamStore& teacher, const ParamStore& student, double alpha);

/// EMA shadow of the student backbone. Starts as an exact copy and only
/// ever changes through update().
class TeacherState {
public:
    explicit TeacherState(const DiffusionTransformer& student) : model_(student) {}

    DiffusionTransformer& model() { return model_; }
    const DiffusionTransformer& model() const { return model_; }
    std::int64_t updates() const { return updates_; }
    void set_updates(std::int64_t n) { updates_ = n; }

    void update(const DiffusionTransformer& student, double alpha);

private:
    DiffusionTransformer model_;
    std::int64_t updates_ = 0;
};

/// Mean over batch and patches of the per-patch distance, where the
/// per-patch distance is the mean over channels of the kernel.
double alignment_loss(const Tensor& teacher_tap, const Tensor& projected_student, DistanceKernel kernel,
                      double beta = 1.0);
/// Differentiable form. The teacher tap must be a constant on `tape`.
ag::Var alignment_loss(ag::Tape& tape, const ag::Var& teacher_tap, const ag::Var& projected_student,
                       DistanceKernel kernel, double beta = 1.0);

/// gen + lambda * align. Throws std::domain_error on non-finite input.
double joint_loss(double gen_loss, double align_loss, double lambda);
ag::Var joint_loss(ag::Tape& tape, const ag::Var& gen_loss, const ag::Var& align_loss, double lambda);

struct SraTargets {
    ag::Var prediction;     // student output on x_t
    ag::Var student_tap;    // layer m, before the projection head
    ag::Var teacher_tap;    // layer n, constant on the student tape
    std::vector<double> k;  // interval per sample
    std::vector<double> teacher_t;
};

/// Draws the interval(s) k from `rng`, runs the student on (x_t, t, c) with
/// a tap at m and the teacher, without gradients, on (x_{t-k}, t-k, c) with a
/// tap at n. Returns the student prediction and both taps.
SraTargets sra_training_targets(ag::Tape& tape, DiffusionTransformer& student, TeacherState& teacher,
                                const ForwardProcess& process, const TrainBatch& batch, const SraConfig& config,
                                Rng& rng);

/// Interval draws, shared with the baseline trainer so both consume the
/// same random stream.
std::vector<double> draw_intervals(const SraConfig& config, Family family, std::int64_t batch, Rng& rng);

}  // namespace sra
