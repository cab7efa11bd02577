#include "cmg/pipeline.hpp"

#include "cmg/features.hpp"
#include "cmg/synthetic.hpp"
#include "cmg/text_embedder.hpp"

namespace cmg {

using nlohmann::json;

std::vector<TrainSample> toy_dataset(const RunConfig& cfg, const Skeleton& skel) {
  return synthetic_dataset(skel, cfg.get_int("train.samples"), cfg.get_int("model.frames"), cfg.get_double("model.fps"),
                           cfg.seed());
}

DenoiserWeights train_toy_model(const RunConfig& cfg, const Skeleton& skel, TrainReport* report,
                                std::function<void(int, const LossParts&)> on_step) {
  DenoiserConfig mc = cfg.denoiser();
  mc.joints = skel.joints();
  TrainConfig tc = cfg.train();
  tc.on_step = std::move(on_step);
  const HashedBagOfWords embedder(static_cast<std::size_t>(mc.text_dim));
  return train_toy(toy_dataset(cfg, skel), mc, tc, skel, cfg.schedule(), embedder, report);
}

GeneratedMotions generate_motions(const ScenePlan& plan, const DenoiserWeights& weights, const RunConfig& cfg,
                                  const Skeleton& skel) {
  const DenoiserConfig& mc = weights.config();
  require(mc.joints == skel.joints(), "generate: model joints (" + std::to_string(mc.joints) +
                                          ") differ from the skeleton (" + std::to_string(skel.joints()) + ")");
  require(plan.frames == mc.frames, "generate: plan has " + std::to_string(plan.frames) + " frames, model generates " +
                                        std::to_string(mc.frames));
  require(plan.fps == mc.fps, "generate: plan fps differs from the model fps");
  const Denoiser model(weights, cfg.precision());
  const HashedBagOfWords embedder(static_cast<std::size_t>(mc.text_dim));
  const SamplerConfig sc = cfg.sampler();
  std::vector<AgentRequest> requests;
  for (int i = 0; i < plan.n(); ++i) {
    requests.push_back({embedder.condition(plan.agents[i].text), canonical_control(plan, i, skel),
                        agent_seed(cfg.seed(), static_cast<std::size_t>(i))});
  }
  const auto rel = sample_agents(model, cfg.schedule(), requests, skel, sc,
                                 static_cast<unsigned>(std::max(0, cfg.get_int("runtime.threads"))));
  GeneratedMotions out;
  out.relative.repr = "relative";
  out.global.repr = "global";
  for (MotionFile* m : {&out.relative, &out.global}) {
    m->fps = mc.fps;
    m->J = skel.joints();
    m->joint_names = skel.names();
  }
  for (int i = 0; i < plan.n(); ++i) {
    out.relative.tensors.push_back(rel[i]);
    const GlobalMotion local = relative_to_global(RelativeMotion{rel[i], mc.fps}, skel);
    out.global.tensors.push_back(agent_frame(plan, i).to_world(local, skel).positions);
  }
  return out;
}

std::vector<GlobalMotion> global_motions(const MotionFile& m, const Skeleton& skel) {
  m.validate();
  require(m.J == skel.joints(), "motion file has " + std::to_string(m.J) + " joints, skeleton has " +
                                    std::to_string(skel.joints()));
  std::vector<GlobalMotion> out;
  for (const auto& t : m.tensors) {
    if (m.repr == "relative") {
      out.push_back(relative_to_global(RelativeMotion{t, m.fps}, skel));
    } else {
      GlobalMotion g;
      g.positions = t;
      g.fps = m.fps;
      out.push_back(std::move(g));
    }
  }
  return out;
}

namespace {

json num(double v) { return std::isfinite(v) ? json(round_sig9(v)) : json(nullptr); }

}  // namespace

json evaluate_motions(const MotionFile& motion, const ScenePlan* plan, const MotionFile* reference,
                      const RunConfig& cfg, const Skeleton& skel) {
  const auto gen = global_motions(motion, skel);
  require(!gen.empty(), "eval: motion file holds no sequences");
  json metrics = json::object();
  json notes = json::array();

  const FootSkateConfig fs = cfg.foot_skate();
  double skate = 0.0;
  for (const auto& g : gen) skate += foot_skating_ratio(g, skel, fs);
  metrics["foot_skating_ratio"] = num(skate / static_cast<double>(gen.size()));

  const FeatureSet gen_feats = motion_feature_set(gen, skel);
  std::vector<GlobalMotion> ref;
  if (reference) {
    ref = global_motions(*reference, skel);
  } else {
    for (const auto& s : toy_dataset(cfg, skel)) ref.push_back(relative_to_global(s.motion, skel));
    notes.push_back("FID reference: synthetic toy dataset");
  }
  const FeatureSet ref_feats = motion_feature_set(ref, skel);
  if (gen.size() >= 2 && ref.size() >= 2) {
    metrics["fid"] = num(fid(ref_feats, gen_feats));
    metrics["diversity"] = num(diversity(gen_feats, cfg.get_int("metrics.diversity_pairs"), cfg.seed()));
  } else {
    metrics["fid"] = nullptr;
    metrics["diversity"] = nullptr;
    notes.push_back("fid and diversity need at least two sequences per set");
  }
  // The handcrafted extractor has no text branch, so there is no shared space to rank texts in.
  metrics["r_precision"] = nullptr;
  notes.push_back("r_precision needs paired text features; the handcrafted motion extractor provides none");
  notes.push_back(std::string("features: ") + kMotionFeatureId +
                  " (values are not comparable with learned-extractor benchmarks)");

  const double threshold = cfg.get_double("metrics.threshold");
  if (plan) {
    require(plan->n() == motion.n(), "eval: plan has " + std::to_string(plan->n()) + " agents, motion file has " +
                                         std::to_string(motion.n()));
    std::vector<SpatialControl> controls;
    for (int i = 0; i < plan->n(); ++i) {
      controls.push_back(motion.repr == "relative" ? canonical_control(*plan, i, skel) : plan->control[i]);
    }
    const SpatialErrorReport r = spatial_errors(gen, controls, threshold);
    metrics["spatial"] = {{"defined", r.defined},
                          {"threshold", num(threshold)},
                          {"traj_err", r.defined ? num(r.traj_err) : json(nullptr)},
                          {"loc_err", r.defined ? num(r.loc_err) : json(nullptr)},
                          {"avg_err", r.defined ? num(r.avg_err) : json(nullptr)},
                          {"entries", r.entries}};
  } else {
    metrics["spatial"] = nullptr;
    notes.push_back("spatial errors need --plan");
  }

  json config = json::object();
  for (const auto& [k, v] : cfg.values()) config[k] = v;
  return {{"metrics", metrics},
          {"config", config},
          {"seed", cfg.seed()},
          {"sequences", motion.n()},
          {"repr", motion.repr},
          {"feature_extractor", kMotionFeatureId},
          {"notes", notes}};
}

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

}  // namespace cmg
