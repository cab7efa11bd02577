#pragma once

#include <random>
#include <string>
#include <vector>

#include "cmg/types.hpp"

namespace cmg {

/// Variance schedule for T noise levels. Arrays are indexed 0..T-1; index k holds the
/// values of the (k+1)-th noising step, so alpha_bars[k] = prod_{s<=k} alphas[s].
struct DiffusionSchedule {
  int T = 0;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;
};

/// Linear beta schedule. Throws ValidationError for T < 1 or betas outside (0, 1).
DiffusionSchedule build_schedule(int T, double beta_start, double beta_end);

/// Evenly spaced timestep subsequence of length `steps` over [0, T), ascending and always
/// ending at T-1: t_k = round((k+1) T / steps) - 1.
std::vector<int> strided_timesteps(int T, int steps);

/// Schedule restricted to `timesteps` (ascending indices into `base`). Betas are re-derived so
/// the cumulative products match the base schedule at the kept indices.
DiffusionSchedule respace(const DiffusionSchedule& base, const std::vector<int>& timesteps);

struct NoisedState {
  Matrix x_t;
  int t = 0;
  Matrix eps;
};

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, with t an array index in [0, T).
NoisedState forward_noise(const Matrix& x0, int t, const Matrix& eps, const DiffusionSchedule& sched);

/// Noise implied by a clean-sample estimate; exact inverse of forward_noise at the same index.
Matrix epsilon_from_x0(const Matrix& x_t, const Matrix& x0_hat, int t, const DiffusionSchedule& sched);

enum class MeanMode {
  // mu = sqrt(abar_t) x0_hat + sqrt(1 - abar_t) eps_hat(x_t, x0_hat); reduces to x_t.
  Paper,
  // Standard DDPM posterior mean of q(x_{t-1} | x_t, x0_hat).
  DdpmPosterior,
};

MeanMode parse_mean_mode(const std::string& s);
std::string to_string(MeanMode m);

/// Reverse-process mean for 1-based step t in [1, T] (uses arrays at t-1; abar_0 := 1).
Matrix reverse_mean(const Matrix& x_t, const Matrix& x0_hat, int t, const DiffusionSchedule& sched,
                    MeanMode mode);

/// One ancestral step x_t -> x_{t-1} = mu + sqrt(beta_t) z. No noise is drawn when `rng` is null
/// or at t == 1.
Matrix reverse_step(const Matrix& x_t, const Matrix& x0_hat, int t, const DiffusionSchedule& sched,
                    std::mt19937_64* rng, MeanMode mode = MeanMode::DdpmPosterior);

/// Classifier-free guidance: uncond + scale (cond - uncond).
Matrix cfg_combine(const Matrix& cond_x0, const Matrix& uncond_x0, double scale);

/// Standard-normal matrix drawn row-major from `rng`.
Matrix gaussian_like(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

}  // namespace cmg
