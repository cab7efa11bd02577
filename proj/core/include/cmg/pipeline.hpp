#pragma once

#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cmg/config.hpp"
#include "cmg/io.hpp"
#include "cmg/plan_io.hpp"

namespace cmg {

/// Synthetic training set described by the run config (train.samples sequences, model.frames, seed).
std::vector<TrainSample> toy_dataset(const RunConfig& cfg, const Skeleton& skel);

/// Trains a fresh model on toy_dataset with the run config's model, train and loss keys.
DenoiserWeights train_toy_model(const RunConfig& cfg, const Skeleton& skel, TrainReport* report = nullptr,
                                std::function<void(int, const LossParts&)> on_step = {});

struct GeneratedMotions {
  MotionFile relative;  // per-agent canonical frame
  MotionFile global;    // world frame, placed with each agent's plan frame
};

/// Samples one motion per plan agent: text from the agent track, control from canonical_control, seed
/// agent_seed(run seed, agent).
GeneratedMotions generate_motions(const ScenePlan& plan, const DenoiserWeights& weights, const RunConfig& cfg,
                                  const Skeleton& skel);

/// Metrics report. `plan` (optional) supplies spatial controls; `reference` (optional) replaces the
/// synthetic reference set used for FID. Relative motions are evaluated in their canonical frames.
nlohmann::json evaluate_motions(const MotionFile& motion, const ScenePlan* plan, const MotionFile* reference,
                                const RunConfig& cfg, const Skeleton& skel);

/// Pretty JSON with a trailing newline; the byte form written by the CLI.
std::string dump_json(const nlohmann::json& j);

std::vector<GlobalMotion> global_motions(const MotionFile& m, const Skeleton& skel);

}  // namespace cmg
