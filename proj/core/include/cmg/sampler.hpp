#pragma once

#include <cstdint>
#include <vector>

#include "cmg/denoiser.hpp"
#include "cmg/diffusion.hpp"
#include "cmg/guidance.hpp"

namespace cmg {

struct SamplerConfig {
  int steps = 50;
  double cfg_scale = 2.5;
  MeanMode mean_mode = MeanMode::DdpmPosterior;
  bool guidance_enabled = true;
  GuidanceConfig guidance;
};

/// Ancestral sampling over `steps` evenly spaced timesteps. Classifier-free guidance is applied at
/// every step (the unconditional branch keeps the spatial control and drops the text); IK guidance
/// adjusts the x0 estimate during the final guidance.last_n steps. Noise comes from one RNG seeded
/// with `seed`; the final step adds none. Returns an f x D relative motion.
Matrix sample(const Denoiser& model, const DiffusionSchedule& base, const TextCondition& text,
              const SpatialControl& control, const Skeleton& skel, const SamplerConfig& cfg, std::uint64_t seed);

struct AgentRequest {
  TextCondition text;
  SpatialControl control;
  std::uint64_t seed = 0;
};

/// Independent per-agent sampling, fanned out over `threads` workers (0 = hardware concurrency).
/// Results are indexed like `agents` and do not depend on the thread count.
std::vector<Matrix> sample_agents(const Denoiser& model, const DiffusionSchedule& base,
                                  const std::vector<AgentRequest>& agents, const Skeleton& skel,
                                  const SamplerConfig& cfg, unsigned threads = 1);

/// Per-agent seed derived from a run seed (splitmix64 of seed and index).
std::uint64_t agent_seed(std::uint64_t seed, std::size_t index);

}  // namespace cmg
