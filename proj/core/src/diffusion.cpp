#include "cmg/diffusion.hpp"

#include <cmath>

namespace cmg {

DiffusionSchedule build_schedule(int T, double beta_start, double beta_end) {
  require(T >= 1, "diffusion schedule: T must be >= 1, got " + std::to_string(T));
  require(beta_start > 0.0 && beta_start < 1.0, "diffusion schedule: beta_start must lie in (0,1)");
  require(beta_end > 0.0 && beta_end < 1.0, "diffusion schedule: beta_end must lie in (0,1)");
  require(beta_start <= beta_end, "diffusion schedule: beta_start must be <= beta_end");

  DiffusionSchedule s;
  s.T = T;
  s.betas.resize(T);
  s.alphas.resize(T);
  s.alpha_bars.resize(T);
  double prod = 1.0;
  for (int t = 0; t < T; ++t) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(t) / static_cast<double>(T - 1);
    s.betas[t] = t == T - 1 && T > 1 ? beta_end : beta_start + (beta_end - beta_start) * frac;
    s.alphas[t] = 1.0 - s.betas[t];
    prod *= s.alphas[t];
    s.alpha_bars[t] = prod;
  }
  return s;
}

std::vector<int> strided_timesteps(int T, int steps) {
  require(steps >= 1 && steps <= T, "strided_timesteps: need 1 <= steps <= T");
  std::vector<int> out(steps);
  for (int k = 0; k < steps; ++k) {
    const double v = static_cast<double>(k + 1) * T / steps;
    out[k] = static_cast<int>(std::lround(v)) - 1;
  }
  return out;
}

DiffusionSchedule respace(const DiffusionSchedule& base, const std::vector<int>& timesteps) {
  require(!timesteps.empty(), "respace: empty timestep list");
  DiffusionSchedule s;
  s.T = static_cast<int>(timesteps.size());
  double prev = 1.0;
  int last = -1;
  for (int t : timesteps) {
    require(t > last && t < base.T, "respace: timesteps must be strictly ascending and < T");
    last = t;
    const double abar = base.alpha_bars[t];
    s.alpha_bars.push_back(abar);
    s.alphas.push_back(abar / prev);
    s.betas.push_back(1.0 - abar / prev);
    prev = abar;
  }
  return s;
}

namespace {
void check_index(int t, const DiffusionSchedule& sched, const char* what) {
  if (t < 0 || t >= sched.T) {
    throw ValidationError(std::string(what) + ": timestep " + std::to_string(t) + " outside [0, " +
                          std::to_string(sched.T) + ")");
  }
}
}  // namespace

NoisedState forward_noise(const Matrix& x0, int t, const Matrix& eps, const DiffusionSchedule& sched) {
  require_same_shape(x0, eps, "forward_noise");
  check_index(t, sched, "forward_noise");
  const double abar = sched.alpha_bars[t];
  NoisedState out;
  out.t = t;
  out.eps = eps;
  out.x_t = std::sqrt(abar) * x0 + std::sqrt(1.0 - abar) * eps;
  return out;
}

Matrix epsilon_from_x0(const Matrix& x_t, const Matrix& x0_hat, int t, const DiffusionSchedule& sched) {
  require_same_shape(x_t, x0_hat, "epsilon_from_x0");
  check_index(t, sched, "epsilon_from_x0");
  const double abar = sched.alpha_bars[t];
  require(abar > 0.0 && abar < 1.0, "epsilon_from_x0: alpha_bar must lie in (0,1)");
  // (x_t / sqrt(abar) - x0) / sqrt(1/abar - 1)
  return (x_t / std::sqrt(abar) - x0_hat) / std::sqrt(1.0 / abar - 1.0);
}

MeanMode parse_mean_mode(const std::string& s) {
  if (s == "paper") return MeanMode::Paper;
  if (s == "ddpm_posterior") return MeanMode::DdpmPosterior;
  throw ValidationError("unknown mean mode '" + s + "' (expected paper | ddpm_posterior)");
}

std::string to_string(MeanMode m) { return m == MeanMode::Paper ? "paper" : "ddpm_posterior"; }

Matrix reverse_mean(const Matrix& x_t, const Matrix& x0_hat, int t, const DiffusionSchedule& sched,
                    MeanMode mode) {
  require_same_shape(x_t, x0_hat, "reverse_mean");
  if (t < 1 || t > sched.T) {
    throw ValidationError("reverse step: t must lie in [1, " + std::to_string(sched.T) + "], got " +
                          std::to_string(t));
  }
  const double abar = sched.alpha_bars[t - 1];
  if (mode == MeanMode::Paper) {
    const Matrix eps = epsilon_from_x0(x_t, x0_hat, t - 1, sched);
    return std::sqrt(abar) * x0_hat + std::sqrt(1.0 - abar) * eps;
  }
  const double abar_prev = t >= 2 ? sched.alpha_bars[t - 2] : 1.0;
  const double beta = sched.betas[t - 1];
  const double c0 = std::sqrt(abar_prev) * beta / (1.0 - abar);
  const double ct = std::sqrt(1.0 - beta) * (1.0 - abar_prev) / (1.0 - abar);
  return c0 * x0_hat + ct * x_t;
}

Matrix reverse_step(const Matrix& x_t, const Matrix& x0_hat, int t, const DiffusionSchedule& sched,
                    std::mt19937_64* rng, MeanMode mode) {
  Matrix mu = reverse_mean(x_t, x0_hat, t, sched, mode);
  if (rng == nullptr || t == 1) return mu;
  const double sigma = std::sqrt(sched.betas[t - 1]);
  return mu + sigma * gaussian_like(mu.rows(), mu.cols(), *rng);
}

Matrix cfg_combine(const Matrix& cond_x0, const Matrix& uncond_x0, double scale) {
  require_same_shape(cond_x0, uncond_x0, "cfg_combine");
  return uncond_x0 + scale * (cond_x0 - uncond_x0);
}

Matrix gaussian_like(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(rows, cols);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = normal(rng);
  return out;
}

}  // namespace cmg
