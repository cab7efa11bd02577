#include "cmg/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <sstream>

#include "cmg/io.hpp"

namespace cmg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

const std::vector<ConfigKey>& RunConfig::keys() {
  static const std::vector<ConfigKey> k = {
      {"seed", "0", "run seed; every random choice derives from it"},
      {"diffusion.T", "1000", "number of noise levels"},
      {"diffusion.beta_start", "0.0001", "first beta of the linear schedule"},
      {"diffusion.beta_end", "0.02", "last beta of the linear schedule"},
      {"diffusion.infer_steps", "50", "sampling steps (evenly spaced timesteps)"},
      {"diffusion.cfg_scale", "2.5", "classifier-free guidance scale"},
      {"diffusion.mean_mode", "ddpm_posterior", "reverse mean: ddpm_posterior or paper"},
      {"diffusion.precision", "f64", "denoiser arithmetic: f64 or f32"},
      {"model.frames", "60", "clip length in frames"},
      {"model.fps", "20", "frames per second"},
      {"model.latent", "32", "per-joint latent width"},
      {"model.blocks", "4", "transformer blocks"},
      {"model.ffn", "64", "feed-forward hidden width"},
      {"model.text_dim", "512", "text embedding width"},
      {"guidance.enabled", "true", "IK guidance during the final steps"},
      {"guidance.eta", "0.1", "IK guidance step size"},
      {"guidance.inner_steps", "20", "gradient steps per guided sampling step"},
      {"guidance.last_n", "10", "number of final sampling steps that are guided"},
      {"guidance.clamp", "0", "max L2 norm of one guidance update (0 = off)"},
      {"loss.whole", "1", "weight of the whole-motion reconstruction loss"},
      {"loss.con", "1", "weight of the control loss"},
      {"loss.foot", "1", "weight of the foot sliding loss"},
      {"loss.h_thresh", "0.05", "foot height (m) below which sliding is penalised"},
      {"loss.con_mode", "normalized", "control loss: normalized (masked mean) or literal"},
      {"train.steps", "2000", "optimizer steps"},
      {"train.lr", "0.0002", "learning rate"},
      {"train.optimizer", "adam", "adam or sgd"},
      {"train.batch", "1", "examples per step"},
      {"train.text_dropout", "0.1", "probability of training with the null text"},
      {"train.empty_mask_prob", "0.2", "probability of training without control"},
      {"train.grad_clip", "0", "global gradient norm clip (0 = off)"},
      {"train.samples", "8", "synthetic sequences used by train-toy"},
      {"planner.backend", "fallback", "llm or fallback"},
      {"planner.arena", "20", "arena side (m) for group anchors"},
      {"planner.base_spacing", "4", "anchor spacing is base_spacing * (1.5 - sigma)"},
      {"planner.alpha_interact", "0.7", "alpha at or above this adds paired hand constraints"},
      {"planner.v_max", "1.5", "max pelvis speed (m/s)"},
      {"planner.eps_return", "0.1", "return tolerance (m) after a Passing event"},
      {"planner.walk_speed", "0.6", "speed of walking groups (m/s)"},
      {"planner.handshake_distance", "0.2", "hand distance (m) of paired constraints"},
      {"planner.follow_delay", "0.5", "Following: delay per rank (s)"},
      {"planner.follow_offset", "0.6", "Following: lateral offset of odd ranks (m)"},
      {"planner.random_radius", "3", "Random: waypoint disk radius (m)"},
      {"planner.pelvis_height", "0", "pelvis target height (m); 0 = skeleton standing height"},
      {"planner.keyframe_stride", "15", "frames between planner keyframes"},
      {"planner.llm_candidates", "3", "candidate motion plans requested from the LLM"},
      {"planner.interp", "catmull-rom", "track densification: catmull-rom or linear"},
      {"llm.endpoint", "", "chat-completions URL (or CMG_LLM_ENDPOINT)"},
      {"llm.model", "gpt-4", "model name (or CMG_LLM_MODEL)"},
      {"llm.timeout", "20", "request timeout (s)"},
      {"llm.max_retries", "2", "retries after the first attempt"},
      {"llm.backoff", "0.5", "initial retry delay (s), doubled per retry"},
      {"metrics.threshold", "0.5", "spatial error threshold (m)"},
      {"metrics.foot_height", "0.05", "foot skating height threshold (m)"},
      {"metrics.foot_slide", "0.0025", "foot skating slide threshold (m/frame)"},
      {"metrics.pool_size", "32", "R-precision retrieval pool"},
      {"metrics.diversity_pairs", "300", "pairs sampled for diversity"},
      {"runtime.threads", "1", "worker threads for per-agent sampling (0 = all cores)"},
  };
  return k;
}

RunConfig::RunConfig() {
  for (const auto& k : keys()) values_[k.name] = k.default_value;
}

std::string RunConfig::env_name(const std::string& key) {
  std::string out = "CMG_";
  for (char c : key) out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("unknown config key '" + key + "'");
  it->second = value;
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ValidationError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::load_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      set_assignment(line);
    } catch (const ValidationError& e) {
      throw ValidationError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void RunConfig::load_file(const std::string& path) { load_text(read_file(path), path); }

void RunConfig::apply_env(const std::map<std::string, std::string>* env) {
  for (const auto& k : keys()) {
    const std::string name = env_name(k.name);
    if (env) {
      const auto it = env->find(name);
      if (it != env->end()) values_[k.name] = it->second;
    } else if (const char* v = std::getenv(name.c_str()); v != nullptr) {
      values_[k.name] = v;
    }
  }
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& v = get(key);
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ValidationError("config " + key + ": expected a number, got '" + v + "'");
  }
  return out;
}

int RunConfig::get_int(const std::string& key) const {
  const std::string& v = get(key);
  int out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ValidationError("config " + key + ": expected an integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  const std::string& v = get(key);
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ValidationError("config " + key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string v = lower(get(key));
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ValidationError("config " + key + ": expected true or false, got '" + get(key) + "'");
}

std::string RunConfig::help_text() {
  std::ostringstream out;
  out << "Configuration keys (file: key = value; env: CMG_<KEY>; flag: --set key=value):\n";
  std::size_t width = 0;
  for (const auto& k : keys()) width = std::max(width, k.name.size());
  for (const auto& k : keys()) {
    out << "  " << k.name << std::string(width - k.name.size() + 2, ' ') << "[" << k.default_value << "] " << k.help
        << "\n";
  }
  return out.str();
}

Precision parse_precision(const std::string& s) {
  const std::string k = lower(s);
  if (k == "f64" || k == "double") return Precision::F64;
  if (k == "f32" || k == "float") return Precision::F32;
  throw ValidationError("unknown precision '" + s + "' (expected f64 or f32)");
}

std::string to_string(Precision p) { return p == Precision::F32 ? "f32" : "f64"; }

DiffusionSchedule RunConfig::schedule() const {
  return build_schedule(get_int("diffusion.T"), get_double("diffusion.beta_start"), get_double("diffusion.beta_end"));
}

DenoiserConfig RunConfig::denoiser() const {
  DenoiserConfig c;
  c.frames = get_int("model.frames");
  c.fps = get_double("model.fps");
  c.latent = get_int("model.latent");
  c.blocks = get_int("model.blocks");
  c.ffn = get_int("model.ffn");
  c.text_dim = get_int("model.text_dim");
  c.T = get_int("diffusion.T");
  return c;
}

Precision RunConfig::precision() const { return parse_precision(get("diffusion.precision")); }

SamplerConfig RunConfig::sampler() const {
  SamplerConfig c;
  c.steps = get_int("diffusion.infer_steps");
  c.cfg_scale = get_double("diffusion.cfg_scale");
  c.mean_mode = parse_mean_mode(get("diffusion.mean_mode"));
  c.guidance_enabled = get_bool("guidance.enabled");
  c.guidance.eta = get_double("guidance.eta");
  c.guidance.inner_steps = get_int("guidance.inner_steps");
  c.guidance.last_n = get_int("guidance.last_n");
  c.guidance.clamp = get_double("guidance.clamp");
  c.guidance.validate(c.steps);
  return c;
}

LossWeights RunConfig::loss() const {
  LossWeights w;
  w.whole = get_double("loss.whole");
  w.con = get_double("loss.con");
  w.foot = get_double("loss.foot");
  w.h_thresh = get_double("loss.h_thresh");
  w.con_mode = parse_con_mode(get("loss.con_mode"));
  return w;
}

TrainConfig RunConfig::train() const {
  TrainConfig t;
  t.steps = get_int("train.steps");
  t.lr = get_double("train.lr");
  t.optimizer = parse_optimizer(get("train.optimizer"));
  t.batch = get_int("train.batch");
  t.text_dropout = get_double("train.text_dropout");
  t.empty_mask_prob = get_double("train.empty_mask_prob");
  t.grad_clip = get_double("train.grad_clip");
  t.seed = seed();
  t.loss = loss();
  t.validate();
  return t;
}

PlannerConfig RunConfig::planner() const {
  PlannerConfig p;
  p.frames = get_int("model.frames");
  p.fps = get_double("model.fps");
  p.arena = get_double("planner.arena");
  p.base_spacing = get_double("planner.base_spacing");
  p.alpha_interact = get_double("planner.alpha_interact");
  p.v_max = get_double("planner.v_max");
  p.eps_return = get_double("planner.eps_return");
  p.walk_speed = get_double("planner.walk_speed");
  p.handshake_distance = get_double("planner.handshake_distance");
  p.follow_delay = get_double("planner.follow_delay");
  p.follow_offset = get_double("planner.follow_offset");
  p.random_radius = get_double("planner.random_radius");
  p.pelvis_height = get_double("planner.pelvis_height");
  p.keyframe_stride = get_int("planner.keyframe_stride");
  p.llm_candidates = get_int("planner.llm_candidates");
  p.validate();
  return p;
}

LlmConfig RunConfig::llm() const {
  LlmConfig c;
  c.endpoint = get("llm.endpoint");
  c.model = get("llm.model");
  c.timeout_s = get_double("llm.timeout");
  c.max_retries = get_int("llm.max_retries");
  c.backoff_s = get_double("llm.backoff");
  if (const char* key = std::getenv("CMG_LLM_API_KEY"); key != nullptr) c.api_key = key;
  return c;
}

FootSkateConfig RunConfig::foot_skate() const {
  return {get_double("metrics.foot_height"), get_double("metrics.foot_slide")};
}

}  // namespace cmg
