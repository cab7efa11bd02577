#include "cmg/sampler.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <random>
#include <thread>

namespace cmg {

Matrix sample(const Denoiser& model, const DiffusionSchedule& base, const TextCondition& text,
              const SpatialControl& control, const Skeleton& skel, const SamplerConfig& cfg, std::uint64_t seed) {
  const DenoiserConfig& mc = model.config();
  require(base.T == mc.T, "sample: schedule has " + std::to_string(base.T) + " steps, model expects " +
                              std::to_string(mc.T));
  require(cfg.steps >= 1 && cfg.steps <= base.T, "sample: steps must be in [1, T]");
  require(skel.joints() == mc.joints, "sample: skeleton joint count does not match the model");
  require(control.frames() <= mc.frames, "sample: control mask has " + std::to_string(control.frames()) +
                                             " frames, model generates " + std::to_string(mc.frames));
  require(control.frames() == mc.frames && control.joints() == mc.joints,
          "sample: control shape " + shape_str(control.mask.rows(), control.mask.cols()) + ", expected " +
              shape_str(mc.frames, mc.joints));
  control.validate();
  if (cfg.guidance_enabled) cfg.guidance.validate(cfg.steps);

  const std::vector<int> ts = strided_timesteps(base.T, cfg.steps);
  const DiffusionSchedule sched = respace(base, ts);
  const TextCondition null_text = TextCondition::null(text.embedding.size());
  const bool use_cfg = cfg.cfg_scale != 1.0 && !text.null_flag;
  const bool guide = cfg.guidance_enabled && control.any();

  std::mt19937_64 rng(seed);
  Matrix x = gaussian_like(mc.frames, mc.D(), rng);
  for (int k = cfg.steps - 1; k >= 0; --k) {
    Matrix x0 = model.predict(x, ts[k], text, control);
    if (use_cfg) x0 = cfg_combine(x0, model.predict(x, ts[k], null_text, control), cfg.cfg_scale);
    if (guide && k < cfg.guidance.last_n) x0 = ik_guide(x0, control, skel, mc.fps, cfg.guidance);
    x = reverse_step(x, x0, k + 1, sched, k == 0 ? nullptr : &rng, cfg.mean_mode);
  }
  return x;
}

std::uint64_t agent_seed(std::uint64_t seed, std::size_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<Matrix> sample_agents(const Denoiser& model, const DiffusionSchedule& base,
                                  const std::vector<AgentRequest>& agents, const Skeleton& skel,
                                  const SamplerConfig& cfg, unsigned threads) {
  std::vector<Matrix> out(agents.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, agents.size())));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < agents.size(); i = next++) {
      try {
        out[i] = sample(model, base, agents[i].text, agents[i].control, skel, cfg, agents[i].seed);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace cmg
