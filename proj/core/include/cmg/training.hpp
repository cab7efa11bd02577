#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cmg/denoiser.hpp"
#include "cmg/diffusion.hpp"
#include "cmg/losses.hpp"

namespace cmg {

enum class OptimizerKind { Sgd, Adam };

OptimizerKind parse_optimizer(const std::string& s);
std::string to_string(OptimizerKind k);

struct TrainConfig {
  int steps = 2000;
  double lr = 2e-4;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double momentum = 0.9;  // SGD only
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch = 1;
  double text_dropout = 0.1;
  double empty_mask_prob = 0.2;
  double grad_clip = 0.0;  // global L2 norm; 0 disables
  std::uint64_t seed = 0;
  LossWeights loss;
  std::function<void(int step, const LossParts&)> on_step;

  void validate() const;
};

/// One dataset entry. `control` marks which entries may be sampled as training controls; its targets
/// are the sequence's own global joint positions in the canonical frame.
struct TrainSample {
  std::string text;
  RelativeMotion motion;
  SpatialControl control;
};

/// A single fully specified denoising problem.
struct TrainExample {
  Matrix x_t;
  int t = 0;
  Matrix x_gt;
  TextCondition text;
  SpatialControl control;
};

struct TrainReport {
  LossParts initial;
  LossParts final;
  std::vector<double> history;  // total loss per step
};

/// Loss of the denoiser's prediction and (optionally) its gradient for every tensor, in layout order.
LossParts model_loss_and_grad(const DenoiserWeights& weights, const TrainExample& ex, const Skeleton& skel,
                              const LossWeights& lw, std::vector<Matrix>* grads);

/// Fixed evaluation control: pelvis entries every 5th frame, restricted to the sample's available mask.
SpatialControl evaluation_control(const SpatialControl& available, int pelvis = 0);

/// Loss averaged over every sample at a fixed set of timesteps with seeded noise.
LossParts evaluate_dataset(const DenoiserWeights& weights, const std::vector<TrainSample>& data, const Skeleton& skel,
                           const DiffusionSchedule& sched, const TextEmbedder& embedder, const LossWeights& lw,
                           std::uint64_t seed);

/// Trains from DenoiserWeights::init(config, train.seed). Throws RuntimeError if the loss turns non-finite.
DenoiserWeights train_toy(const std::vector<TrainSample>& data, const DenoiserConfig& config,
                          const TrainConfig& train, const Skeleton& skel, const DiffusionSchedule& sched,
                          const TextEmbedder& embedder, TrainReport* report = nullptr);

/// Continues training from `init`.
DenoiserWeights train_from(DenoiserWeights init, const std::vector<TrainSample>& data, const TrainConfig& train,
                           const Skeleton& skel, const DiffusionSchedule& sched, const TextEmbedder& embedder,
                           TrainReport* report = nullptr);

}  // namespace cmg
