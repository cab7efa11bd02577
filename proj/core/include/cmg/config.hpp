#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cmg/denoiser.hpp"
#include "cmg/llm.hpp"
#include "cmg/losses.hpp"
#include "cmg/metrics.hpp"
#include "cmg/planner.hpp"
#include "cmg/sampler.hpp"
#include "cmg/training.hpp"

namespace cmg {

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

/// Flat dotted keys ("diffusion.infer_steps = 50"). Later sources override earlier ones: defaults, config
/// file, environment (CMG_ + upper-cased key with dots as underscores, e.g. CMG_DIFFUSION_INFER_STEPS), then
/// explicit set() calls from the command line. Unknown keys are rejected everywhere.
class RunConfig {
 public:
  RunConfig();

  static const std::vector<ConfigKey>& keys();
  static std::string env_name(const std::string& key);

  /// Parses "key = value" lines; '#' starts a comment, blank lines are ignored.
  void load_text(const std::string& text, const std::string& origin = "config");
  void load_file(const std::string& path);
  /// `env` stands in for the process environment in tests; nullptr reads the real one.
  void apply_env(const std::map<std::string, std::string>* env = nullptr);
  void set(const std::string& key, const std::string& value);
  /// "key=value" form used by --set.
  void set_assignment(const std::string& assignment);

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  /// Every key with its current value, sorted by key.
  const std::map<std::string, std::string>& values() const { return values_; }
  static std::string help_text();

  std::uint64_t seed() const { return get_u64("seed"); }
  DiffusionSchedule schedule() const;
  DenoiserConfig denoiser() const;
  Precision precision() const;
  SamplerConfig sampler() const;
  LossWeights loss() const;
  TrainConfig train() const;
  PlannerConfig planner() const;
  LlmConfig llm() const;
  FootSkateConfig foot_skate() const;

 private:
  std::map<std::string, std::string> values_;
};

Precision parse_precision(const std::string& s);
std::string to_string(Precision p);

}  // namespace cmg
