#include <benchmark/benchmark.h>

#include <random>

#include "cmg/denoiser.hpp"
#include "cmg/features.hpp"
#include "cmg/guidance.hpp"
#include "cmg/metrics.hpp"
#include "cmg/motion.hpp"
#include "cmg/text_embedder.hpp"

namespace {

cmg::Matrix random_matrix(int r, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  cmg::Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Default model size: 60 frames, 22 joints, L = 32, 4 blocks.
void BM_DenoiserPredict(benchmark::State& state) {
  const cmg::DenoiserConfig cfg;
  const auto precision = state.range(0) == 64 ? cmg::Precision::F64 : cmg::Precision::F32;
  const cmg::Denoiser model(cmg::DenoiserWeights::init(cfg, 1), precision);
  const cmg::Matrix x = random_matrix(cfg.frames, cfg.D(), 2);
  const auto text = cmg::HashedBagOfWords(cfg.text_dim).condition("a person walks forward");
  auto control = cmg::SpatialControl::empty(cfg.frames, cfg.joints);
  for (int t = 0; t < cfg.frames; t += 5) control.set(t, 0, cmg::Vector3(0.1 * t, 0.9, 0.0));
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(x, 500, text, control));
}
BENCHMARK(BM_DenoiserPredict)->Arg(64)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_ForwardKinematics(benchmark::State& state) {
  const auto skel = cmg::Skeleton::humanml22();
  const cmg::Matrix rel = 0.1 * random_matrix(static_cast<int>(state.range(0)), cmg::relative_dim(22), 3);
  for (auto _ : state) benchmark::DoNotOptimize(cmg::relative_to_global_positions(rel, 20.0, skel));
}
BENCHMARK(BM_ForwardKinematics)->Arg(60)->Arg(196)->Unit(benchmark::kMicrosecond);

void BM_IkGuideStep(benchmark::State& state) {
  const auto skel = cmg::Skeleton::humanml22();
  const cmg::Matrix rel = 0.1 * random_matrix(60, cmg::relative_dim(22), 4);
  auto control = cmg::SpatialControl::empty(60, 22);
  for (int t = 0; t < 60; t += 5) control.set(t, 0, cmg::Vector3(0.05 * t, 0.9, 0.3));
  cmg::GuidanceConfig g;
  g.inner_steps = 1;
  for (auto _ : state) benchmark::DoNotOptimize(cmg::ik_guide(rel, control, skel, 20.0, g));
}
BENCHMARK(BM_IkGuideStep)->Unit(benchmark::kMicrosecond);

void BM_Fid(benchmark::State& state) {
  const auto n = static_cast<int>(state.range(0));
  const cmg::Matrix a = random_matrix(n, cmg::kMotionFeatureDim, 5);
  const cmg::Matrix b = random_matrix(n, cmg::kMotionFeatureDim, 6);
  for (auto _ : state) benchmark::DoNotOptimize(cmg::fid(a, b));
}
BENCHMARK(BM_Fid)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
