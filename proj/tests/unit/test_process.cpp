#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "sra/process.hpp"
#include "test_util.hpp"

namespace sra {
namespace {

const Interpolant kLinear(InterpolantKind::linear);
const Interpolant kVp(InterpolantKind::variance_preserving);

TEST(Interpolant, BoundaryConditions) {
    for (const auto* p : {&kLinear, &kVp}) {
        EXPECT_DOUBLE_EQ(p->alpha(0.0), 1.0);
        EXPECT_DOUBLE_EQ(p->sigma(0.0), 0.0);
        EXPECT_NEAR(p->alpha(1.0), 0.0, 1e-15);
        EXPECT_DOUBLE_EQ(p->sigma(1.0), 1.0);
        for (double t = 0.0; t <= 1.0; t += 0.01) EXPECT_GT(p->alpha(t) * p->alpha(t) + p->sigma(t) * p->sigma(t), 0.0);
    }
}

TEST(Interpolant, DerivativesMatchCentralDifferences) {
    Rng rng(11);
    const double h = 1e-4;
    for (const auto* p : {&kLinear, &kVp}) {
        for (int i = 0; i < 100; ++i) {
            const double t = 0.01 + 0.98 * rng.uniform();
            const double fa = (p->alpha(t + h) - p->alpha(t - h)) / (2 * h);
            const double fs = (p->sigma(t + h) - p->sigma(t - h)) / (2 * h);
            EXPECT_LT(std::abs(fa - p->alpha_dot(t)), 1e-5 * std::abs(p->alpha_dot(t))) << "t=" << t;
            EXPECT_LT(std::abs(fs - p->sigma_dot(t)), 1e-5 * std::abs(p->sigma_dot(t))) << "t=" << t;
        }
    }
}

TEST(InterpolantSample, Examples) {
    const Tensor x0 = test::random_tensor({2, 3}, 1), eps = test::random_tensor({2, 3}, 2);
    for (const auto* p : {&kLinear, &kVp}) {
        EXPECT_TRUE(interpolant_sample(*p, x0, eps, 0.0).bit_equal(x0));
        EXPECT_LT(max_abs_diff(interpolant_sample(*p, x0, eps, 1.0), eps), 1e-15);
    }
    EXPECT_DOUBLE_EQ(interpolant_sample(kLinear, Tensor({1}, 2.0), Tensor({1}, 0.0), 0.5)[0], 1.0);
}

TEST(InterpolantSample, Errors) {
    EXPECT_THROW(interpolant_sample(kLinear, Tensor({2}), Tensor({3}), 0.5), std::invalid_argument);
    EXPECT_THROW(interpolant_sample(kLinear, Tensor({2}), Tensor({2}), 1.5), std::out_of_range);
    EXPECT_THROW(interpolant_sample(kLinear, Tensor({2}), Tensor({2}), -0.1), std::out_of_range);
}

TEST(VelocityTarget, Examples) {
    for (double t : {0.0, 0.3, 1.0}) {
        EXPECT_DOUBLE_EQ(velocity_target(kLinear, Tensor({1}, 1.0), Tensor({1}, 0.0), t)[0], -1.0);
        EXPECT_DOUBLE_EQ(velocity_target(kLinear, Tensor({1}, 0.0), Tensor({1}, 1.0), t)[0], 1.0);
    }
    EXPECT_DOUBLE_EQ(velocity_target(kVp, Tensor({1}, 1.0), Tensor({1}, 0.0), 0.0)[0], 0.0);
}

TEST(NoiseSchedule, AlphaBarIsTheRunningProduct) {
    const auto s = NoiseSchedule::linear();
    EXPECT_EQ(s.steps(), 1000);
    double prod = 1.0;
    for (int t = 0; t < s.steps(); ++t) {
        prod *= 1.0 - s.beta(t);
        EXPECT_NEAR(s.alpha_bar(t), prod, 1e-12);
        if (t > 0) {
            EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
        }
        EXPECT_GT(s.beta(t), 0.0);
        EXPECT_LT(s.beta(t), 1.0);
    }
    EXPECT_DOUBLE_EQ(s.beta(0), 1e-4);
    EXPECT_DOUBLE_EQ(s.beta(999), 0.02);
    EXPECT_THROW(NoiseSchedule({0.5, 1.0}), std::invalid_argument);
    EXPECT_THROW(NoiseSchedule({0.0}), std::invalid_argument);
}

TEST(DdpmForwardMarginal, Examples) {
    const auto s = NoiseSchedule::constant(10, 0.01);
    EXPECT_NEAR(ddpm_forward_marginal(s, Tensor({1}, 1.0), Tensor({1}, 0.0), 0)[0], std::sqrt(0.99), 1e-15);
    // Two single-step transitions with zero noise: sqrt(0.99) * sqrt(0.99).
    const double two_steps = std::sqrt(1 - 0.01) * std::sqrt(1 - 0.01);
    EXPECT_NEAR(ddpm_forward_marginal(s, Tensor({1}, 1.0), Tensor({1}, 0.0), 1)[0], two_steps, 1e-15);
    EXPECT_NEAR(two_steps, 0.99, 1e-15);
    EXPECT_EQ(ddpm_forward_marginal(s, Tensor({3}), Tensor({3}), 7)[0], 0.0);
    EXPECT_THROW(ddpm_forward_marginal(s, Tensor({1}), Tensor({1}), 10), std::out_of_range);
    EXPECT_THROW(ddpm_forward_marginal(s, Tensor({1}), Tensor({1}), -1), std::out_of_range);
}

// Brute-force composition: iterate x_t = sqrt(1 - b_t) x_{t-1} + sqrt(b_t) e_t,
// tracking the coefficient on x0 and the accumulated noise variance.
TEST(DdpmForwardMarginal, MatchesIteratedSingleSteps) {
    Rng rng(5);
    for (int T = 1; T <= 10; ++T) {
        std::vector<double> betas;
        for (int i = 0; i < T; ++i) betas.push_back(0.001 + 0.3 * rng.uniform());
        const NoiseSchedule s(betas);
        double coef = 1.0, var = 0.0;
        for (int t = 0; t < T; ++t) {
            coef *= std::sqrt(1.0 - betas[t]);
            var = (1.0 - betas[t]) * var + betas[t];
            const Tensor x0 = test::random_tensor({4}, 100 + t), eps = test::random_tensor({4}, 200 + t);
            const Tensor got = ddpm_forward_marginal(s, x0, eps, t);
            for (int i = 0; i < 4; ++i) EXPECT_NEAR(got[i], coef * x0[i] + std::sqrt(var) * eps[i], 1e-12);
        }
    }
}

TEST(Losses, Examples) {
    const Tensor a = test::random_tensor({8}, 1), b = test::random_tensor({8}, 2);
    EXPECT_EQ(noise_prediction_loss(a, a), 0.0);
    EXPECT_EQ(velocity_loss(a, a), 0.0);
    EXPECT_DOUBLE_EQ(noise_prediction_loss(Tensor({5}, 0.0), Tensor({5}, 1.0)), 1.0);
    EXPECT_DOUBLE_EQ(velocity_loss(Tensor({5}, 0.0), Tensor({5}, 1.0)), 1.0);
    double oracle = 0.0;
    for (int i = 0; i < 8; ++i) oracle += (a[i] - b[i]) * (a[i] - b[i]);
    oracle /= 8.0;
    EXPECT_NEAR(noise_prediction_loss(a, b), oracle, 1e-12);
    EXPECT_NEAR(velocity_loss(a, b), oracle, 1e-12);
    EXPECT_THROW(noise_prediction_loss(Tensor({2}), Tensor({3})), std::invalid_argument);
    EXPECT_THROW(velocity_loss(Tensor({2}), Tensor({3})), std::invalid_argument);
}

TEST(SampleTimestep, FlowMeanAndDiscreteRange) {
    Rng rng(3);
    double sum = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double t = sample_timestep(Family::continuous_flow, 1000, rng);
        ASSERT_GE(t, 0.0);
        ASSERT_LT(t, 1.0);
        sum += t;
    }
    EXPECT_GE(sum / 10000, 0.48);
    EXPECT_LE(sum / 10000, 0.52);
    for (int i = 0; i < 10000; ++i) {
        const double t = sample_timestep(Family::discrete_denoise, 1000, rng);
        ASSERT_EQ(t, std::floor(t));
        ASSERT_GE(t, 0.0);
        ASSERT_LE(t, 999.0);
    }
}

TEST(SampleTimestep, Reproducible) {
    Rng a(9), b(9);
    for (int i = 0; i < 100; ++i)
        EXPECT_EQ(sample_timestep(Family::continuous_flow, 1000, a), sample_timestep(Family::continuous_flow, 1000, b));
}

TEST(TeacherTimestep, Examples) {
    const TimeSpec flow{Family::continuous_flow, 0.2, 1000};
    const TimeSpec disc{Family::discrete_denoise, 200, 1000};
    EXPECT_EQ(teacher_timestep(flow, 0.15, 0.2), 0.0);
    EXPECT_DOUBLE_EQ(teacher_timestep(flow, 0.5, 0.1), 0.4);
    EXPECT_EQ(teacher_timestep(disc, 350, 120), 230.0);
    EXPECT_EQ(teacher_timestep(disc, 50, 120), 0.0);
    EXPECT_THROW(teacher_timestep(flow, 0.5, -0.01), std::invalid_argument);
    EXPECT_THROW(teacher_timestep(flow, 0.5, 0.3), std::invalid_argument);
    EXPECT_THROW(teacher_timestep(disc, 350.5, 10), std::invalid_argument);
}

TEST(TeacherTimestep, MonotoneAndNonnegative) {
    const TimeSpec flow{Family::continuous_flow, 0.2, 1000};
    Rng rng(4);
    for (int i = 0; i < 1000; ++i) {
        const double t1 = rng.uniform(), t2 = rng.uniform();
        const double k1 = 0.2 * rng.uniform(), k2 = 0.2 * rng.uniform();
        const double lo_t = std::min(t1, t2), hi_t = std::max(t1, t2);
        const double lo_k = std::min(k1, k2), hi_k = std::max(k1, k2);
        EXPECT_LE(teacher_timestep(flow, lo_t, k1), teacher_timestep(flow, hi_t, k1));
        EXPECT_GE(teacher_timestep(flow, t1, lo_k), teacher_timestep(flow, t1, hi_k));
        EXPECT_GE(teacher_timestep(flow, t1, k1), 0.0);
    }
    const TimeSpec disc{Family::discrete_denoise, 200, 1000};
    for (int t = 0; t < 1000; t += 7)
        for (int k = 0; k <= 200; k += 13) {
            EXPECT_GE(teacher_timestep(disc, t, k), 0.0);
            if (t > 0) {
                EXPECT_LE(teacher_timestep(disc, t - 1, k), teacher_timestep(disc, t, k));
            }
            if (k > 0) {
                EXPECT_GE(teacher_timestep(disc, t, k - 1), teacher_timestep(disc, t, k));
            }
        }
}

TEST(ForwardProcess, TargetsPerFamily) {
    const Tensor x0 = test::random_tensor({2, 1, 2, 2}, 1), eps = test::random_tensor({2, 1, 2, 2}, 2);
    const std::vector<double> t{0.25, 0.75};
    ForwardProcess flow({Family::continuous_flow, InterpolantKind::linear});
    const Tensor v = flow.target(x0, eps, t);
    for (int i = 0; i < 8; ++i) EXPECT_DOUBLE_EQ(v[i], eps[i] - x0[i]);
    const Tensor xt = flow.noised(x0, eps, t);
    EXPECT_DOUBLE_EQ(xt[0], 0.75 * x0[0] + 0.25 * eps[0]);
    EXPECT_DOUBLE_EQ(xt[4], 0.25 * x0[4] + 0.75 * eps[4]);

    ForwardProcess disc({Family::discrete_denoise});
    const std::vector<double> td{10, 500};
    EXPECT_TRUE(disc.target(x0, eps, td).bit_equal(eps));
    const Tensor xd = disc.noised(x0, eps, td);
    const double ab = disc.schedule().alpha_bar(500);
    EXPECT_NEAR(xd[5], std::sqrt(ab) * x0[5] + std::sqrt(1 - ab) * eps[5], 1e-15);
    EXPECT_THROW(disc.validate_time(1000), std::out_of_range);
    EXPECT_THROW(flow.validate_time(1.01), std::out_of_range);
    EXPECT_DOUBLE_EQ(flow.model_time(0.5), 500.0);
    EXPECT_DOUBLE_EQ(disc.model_time(500), 500.0);
}

}  // namespace
}  // namespace sra
