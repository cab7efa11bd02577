#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cmg/diffusion.hpp"
#include "cmg/sampler.hpp"
#include "oracles.hpp"

using namespace cmg;

namespace {

DenoiserConfig small_config() {
  DenoiserConfig c;
  c.frames = 8;
  c.joints = 4;
  c.latent = 8;
  c.blocks = 2;
  c.ffn = 16;
  c.text_dim = 16;
  return c;
}

}  // namespace

TEST(Schedule, LinearEndpoints) {
  const auto s = build_schedule(1000, 1e-4, 0.02);
  ASSERT_EQ(s.T, 1000);
  EXPECT_DOUBLE_EQ(s.betas[0], 1e-4);
  EXPECT_DOUBLE_EQ(s.betas[999], 0.02);
  EXPECT_NEAR(s.betas[500], 1e-4 + (0.02 - 1e-4) * 500.0 / 999.0, 1e-15);
  for (int t = 1; t < s.T; ++t) EXPECT_GE(s.betas[t], s.betas[t - 1]);
}

TEST(Schedule, SingleStep) {
  const auto s = build_schedule(1, 0.1, 0.1);
  ASSERT_EQ(s.alpha_bars.size(), 1u);
  EXPECT_DOUBLE_EQ(s.alpha_bars[0], 0.9);
}

TEST(Schedule, FinalAlphaBarMatchesLongDoubleProduct) {
  // Independent product in extended precision, then frozen.
  long double prod = 1.0L;
  for (int t = 0; t < 1000; ++t) prod *= 1.0L - (1e-4L + (0.02L - 1e-4L) * t / 999.0L);
  const auto s = build_schedule(1000, 1e-4, 0.02);
  EXPECT_NEAR(s.alpha_bars[999], static_cast<double>(prod), 1e-15);
  EXPECT_NEAR(s.alpha_bars[999], 4.0358297653756833e-05, 1e-15);
  EXPECT_NEAR(s.alpha_bars[0], 0.9999, 1e-16);
  EXPECT_NEAR(s.alpha_bars[499], 0.07858724288177824, 1e-12);
}

TEST(Schedule, RecurrenceAndMonotone) {
  const auto s = build_schedule(1000, 1e-4, 0.02);
  for (int t = 1; t < s.T; ++t) {
    EXPECT_NEAR(s.alpha_bars[t], s.alpha_bars[t - 1] * s.alphas[t], 1e-12);
    EXPECT_LT(s.alpha_bars[t], s.alpha_bars[t - 1]);
  }
}

TEST(Schedule, RejectsBadInput) {
  EXPECT_THROW(build_schedule(0, 1e-4, 0.02), ValidationError);
  EXPECT_THROW(build_schedule(10, 0.0, 0.02), ValidationError);
  EXPECT_THROW(build_schedule(10, 1e-4, 1.0), ValidationError);
  EXPECT_THROW(build_schedule(10, 0.1, 0.01), ValidationError);
}

TEST(Schedule, StridedTimesteps) {
  const auto ts = strided_timesteps(1000, 50);
  ASSERT_EQ(ts.size(), 50u);
  EXPECT_EQ(ts.front(), 19);
  EXPECT_EQ(ts.back(), 999);
  for (std::size_t k = 1; k < ts.size(); ++k) EXPECT_EQ(ts[k] - ts[k - 1], 20);
  EXPECT_EQ(strided_timesteps(1000, 1), std::vector<int>{999});
  EXPECT_THROW(strided_timesteps(10, 11), ValidationError);
}

TEST(Schedule, RespaceKeepsCumulativeProducts) {
  const auto base = build_schedule(1000, 1e-4, 0.02);
  const auto ts = strided_timesteps(1000, 50);
  const auto r = respace(base, ts);
  double prod = 1.0;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    prod *= r.alphas[k];
    EXPECT_NEAR(prod, base.alpha_bars[ts[k]], 1e-12);
    EXPECT_DOUBLE_EQ(r.alpha_bars[k], base.alpha_bars[ts[k]]);
  }
}

TEST(ForwardNoise, ZeroNoiseAndZeroSignal) {
  const auto s = build_schedule(1000, 1e-4, 0.02);
  std::mt19937_64 rng(1);
  const Matrix x0 = fixtures::random_matrix(3, 5, rng);
  const Matrix e = fixtures::random_matrix(3, 5, rng);
  const int t = 321;
  const auto a = forward_noise(x0, t, Matrix::Zero(3, 5), s);
  EXPECT_TRUE(a.x_t.isApprox(std::sqrt(s.alpha_bars[t]) * x0, 0.0));
  const auto b = forward_noise(Matrix::Zero(3, 5), t, e, s);
  EXPECT_TRUE(b.x_t.isApprox(std::sqrt(1.0 - s.alpha_bars[t]) * e, 0.0));
  EXPECT_EQ(b.eps, e);
}

TEST(ForwardNoise, ScalarHandValue) {
  DiffusionSchedule s;
  s.T = 1;
  s.betas = {0.75};
  s.alphas = {0.25};
  s.alpha_bars = {0.25};
  const auto n = forward_noise(Matrix::Constant(1, 1, 1.0), 0, Matrix::Constant(1, 1, 2.0), s);
  EXPECT_NEAR(n.x_t(0, 0), 0.5 + std::sqrt(0.75) * 2.0, 1e-15);
}

TEST(ForwardNoise, Errors) {
  const auto s = build_schedule(10, 1e-4, 0.02);
  EXPECT_THROW(forward_noise(Matrix::Zero(2, 2), 0, Matrix::Zero(2, 3), s), ValidationError);
  EXPECT_THROW(forward_noise(Matrix::Zero(2, 2), 10, Matrix::Zero(2, 2), s), ValidationError);
  EXPECT_THROW(forward_noise(Matrix::Zero(2, 2), -1, Matrix::Zero(2, 2), s), ValidationError);
}

TEST(EpsilonInversion, IdentityOnRandomInputs) {
  const auto s = build_schedule(1000, 1e-4, 0.02);
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> pick(0, 999);
  for (int rep = 0; rep < 200; ++rep) {
    const int t = pick(rng);
    const Matrix x0 = fixtures::random_matrix(4, 6, rng);
    const Matrix e = fixtures::random_matrix(4, 6, rng);
    const auto n = forward_noise(x0, t, e, s);
    EXPECT_LT((epsilon_from_x0(n.x_t, x0, t, s) - e).cwiseAbs().maxCoeff(), 1e-6) << "t=" << t;
  }
}

TEST(EpsilonInversion, ResidualVanishes) {
  const auto s = build_schedule(1000, 1e-4, 0.02);
  std::mt19937_64 rng(3);
  const Matrix xt = fixtures::random_matrix(2, 3, rng);
  const Matrix e = epsilon_from_x0(xt, xt / std::sqrt(s.alpha_bars[40]), 40, s);
  EXPECT_LT(e.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EpsilonInversion, ScalarHandValue) {
  DiffusionSchedule s;
  s.T = 1;
  s.betas = {0.75};
  s.alphas = {0.25};
  s.alpha_bars = {0.25};
  // (x_t / 0.5 - x0) * sqrt(0.25 / 0.75) with x_t = 1.3, x0 = 0.4.
  const Matrix e = epsilon_from_x0(Matrix::Constant(1, 1, 1.3), Matrix::Constant(1, 1, 0.4), 0, s);
  EXPECT_NEAR(e(0, 0), (2.6 - 0.4) / std::sqrt(3.0), 1e-14);
  EXPECT_THROW(epsilon_from_x0(Matrix::Zero(1, 1), Matrix::Zero(1, 1), 1, s), ValidationError);
}

TEST(ReverseStep, FixedPointMeanReturnsInput) {
  const auto s = build_schedule(1000, 1e-4, 0.02);
  std::mt19937_64 rng(11);
  const Matrix xt = fixtures::random_matrix(3, 4, rng);
  const Matrix x0 = fixtures::random_matrix(3, 4, rng);
  const Matrix mu = reverse_mean(xt, x0, 500, s, MeanMode::Paper);
  // sqrt(abar) x0 + sqrt(1 - abar) eps_hat collapses back onto x_t.
  EXPECT_LT((mu - xt).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ReverseStep, PosteriorMeanClosedForm) {
  const auto s = build_schedule(1000, 1e-4, 0.02);
  const int t = 600;  // 1-based
  const double ab = s.alpha_bars[t - 1], abp = s.alpha_bars[t - 2], b = s.betas[t - 1];
  const Matrix xt = Matrix::Constant(1, 1, 0.7), x0 = Matrix::Constant(1, 1, -0.2);
  const double expect = std::sqrt(abp) * b / (1 - ab) * -0.2 + std::sqrt(1 - b) * (1 - abp) / (1 - ab) * 0.7;
  EXPECT_NEAR(reverse_mean(xt, x0, t, s, MeanMode::DdpmPosterior)(0, 0), expect, 1e-13);
  // At t = 1 the posterior mean is the clean estimate.
  EXPECT_NEAR(reverse_mean(xt, x0, 1, s, MeanMode::DdpmPosterior)(0, 0), -0.2, 1e-12);
}

TEST(ReverseStep, NoiseConventions) {
  const auto s = build_schedule(1000, 1e-4, 0.02);
  std::mt19937_64 data(5);
  const Matrix xt = fixtures::random_matrix(2, 3, data), x0 = fixtures::random_matrix(2, 3, data);
  for (MeanMode m : {MeanMode::Paper, MeanMode::DdpmPosterior}) {
    EXPECT_EQ(reverse_step(xt, x0, 300, s, nullptr, m), reverse_mean(xt, x0, 300, s, m));
    std::mt19937_64 rng(9);
    EXPECT_EQ(reverse_step(xt, x0, 1, s, &rng, m), reverse_mean(xt, x0, 1, s, m));
  }
  EXPECT_THROW(reverse_step(xt, x0, 0, s, nullptr), ValidationError);
  EXPECT_THROW(reverse_step(xt, x0, 1001, s, nullptr), ValidationError);
}

TEST(ReverseStep, SeededScalarMatchesHandFormula) {
  const auto s = build_schedule(1000, 1e-4, 0.02);
  const int t = 250;
  std::mt19937_64 rng(42), copy(42);
  const double z = std::normal_distribution<double>(0.0, 1.0)(copy);
  const Matrix xt = Matrix::Constant(1, 1, 0.3), x0 = Matrix::Constant(1, 1, 0.1);
  const double mu = reverse_mean(xt, x0, t, s, MeanMode::DdpmPosterior)(0, 0);
  EXPECT_NEAR(reverse_step(xt, x0, t, s, &rng)(0, 0), mu + std::sqrt(s.betas[t - 1]) * z, 1e-15);
}

TEST(Cfg, CombineCases) {
  const Matrix c = Matrix::Constant(2, 2, 2.0), u = Matrix::Zero(2, 2);
  EXPECT_EQ(cfg_combine(c, u, 1.0), c);
  EXPECT_EQ(cfg_combine(c, u, 0.0), u);
  EXPECT_EQ(cfg_combine(c, u, 2.5), Matrix::Constant(2, 2, 5.0));
  EXPECT_THROW(cfg_combine(c, Matrix::Zero(2, 3), 1.0), ValidationError);
}

TEST(Cfg, Affine) {
  std::mt19937_64 rng(2);
  const Matrix a = fixtures::random_matrix(3, 3, rng), b = fixtures::random_matrix(3, 3, rng);
  for (auto [s1, s2] : {std::pair{0.3, 4.1}, std::pair{-1.0, 2.5}, std::pair{7.0, 7.0}}) {
    const Matrix lhs = cfg_combine(a, b, s1) + cfg_combine(a, b, s2);
    const Matrix rhs = 2.0 * cfg_combine(a, b, (s1 + s2) / 2.0);
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Sample, SingleStepShapeAndFinite) {
  const auto cfg = small_config();
  const Denoiser model(DenoiserWeights::init(cfg, 1));
  const auto base = build_schedule(1000, 1e-4, 0.02);
  const auto skel = Skeleton::toy4();
  SamplerConfig sc;
  sc.steps = 1;
  sc.guidance.last_n = 1;
  const TextCondition text{std::vector<double>(cfg.text_dim, 0.1), false};
  const Matrix x = sample(model, base, text, SpatialControl::empty(cfg.frames, cfg.joints), skel, sc, 3);
  EXPECT_EQ(x.rows(), cfg.frames);
  EXPECT_EQ(x.cols(), cfg.D());
  EXPECT_TRUE(x.allFinite());
}

TEST(Sample, SeededRunsAreBitIdentical) {
  const auto cfg = small_config();
  const Denoiser model(DenoiserWeights::init(cfg, 4));
  const auto base = build_schedule(1000, 1e-4, 0.02);
  const auto skel = Skeleton::toy4();
  SamplerConfig sc;
  sc.steps = 10;
  sc.guidance.last_n = 3;
  sc.guidance.inner_steps = 2;
  auto control = SpatialControl::empty(cfg.frames, cfg.joints);
  control.set(3, 0, Vector3(0.1, 0.5, 0.2));
  const TextCondition text{std::vector<double>(cfg.text_dim, 0.05), false};
  const Matrix a = sample(model, base, text, control, skel, sc, 17);
  const Matrix b = sample(model, base, text, control, skel, sc, 17);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, sample(model, base, text, control, skel, sc, 18));
}

TEST(Sample, EmptyMaskMatchesUnguidedRun) {
  const auto cfg = small_config();
  const Denoiser model(DenoiserWeights::init(cfg, 5));
  const auto base = build_schedule(1000, 1e-4, 0.02);
  const auto skel = Skeleton::toy4();
  SamplerConfig on;
  on.steps = 8;
  on.guidance.last_n = 8;
  SamplerConfig off = on;
  off.guidance_enabled = false;
  const TextCondition text{std::vector<double>(cfg.text_dim, 0.2), false};
  const auto empty = SpatialControl::empty(cfg.frames, cfg.joints);
  EXPECT_EQ(sample(model, base, text, empty, skel, on, 1), sample(model, base, text, empty, skel, off, 1));
}

TEST(Sample, RejectsMismatchedControl) {
  const auto cfg = small_config();
  const Denoiser model(DenoiserWeights::init(cfg, 5));
  const auto base = build_schedule(1000, 1e-4, 0.02);
  SamplerConfig sc;
  sc.steps = 4;
  sc.guidance.last_n = 2;
  const TextCondition text{std::vector<double>(cfg.text_dim, 0.0), false};
  EXPECT_THROW(sample(model, base, text, SpatialControl::empty(cfg.frames + 4, cfg.joints), Skeleton::toy4(), sc, 1),
               ValidationError);
  sc.guidance.last_n = 5;
  EXPECT_THROW(sample(model, base, text, SpatialControl::empty(cfg.frames, cfg.joints), Skeleton::toy4(), sc, 1),
               ValidationError);
}

TEST(Sample, AgentsIndependentOfThreadCount) {
  const auto cfg = small_config();
  const Denoiser model(DenoiserWeights::init(cfg, 6));
  const auto base = build_schedule(1000, 1e-4, 0.02);
  SamplerConfig sc;
  sc.steps = 5;
  sc.guidance.last_n = 2;
  sc.guidance.inner_steps = 2;
  std::vector<AgentRequest> reqs;
  for (int i = 0; i < 3; ++i) {
    AgentRequest r{{std::vector<double>(cfg.text_dim, 0.1 * i), false}, SpatialControl::empty(cfg.frames, cfg.joints),
                   agent_seed(9, i)};
    r.control.set(2, 0, Vector3(0.0, 0.4, 0.1 * i));
    reqs.push_back(r);
  }
  const auto one = sample_agents(model, base, reqs, Skeleton::toy4(), sc, 1);
  const auto three = sample_agents(model, base, reqs, Skeleton::toy4(), sc, 3);
  ASSERT_EQ(one.size(), 3u);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(one[i], three[i]);
  // Swapping two agents swaps their outputs.
  std::swap(reqs[0], reqs[2]);
  const auto swapped = sample_agents(model, base, reqs, Skeleton::toy4(), sc, 2);
  EXPECT_EQ(swapped[0], one[2]);
  EXPECT_EQ(swapped[2], one[0]);
}
