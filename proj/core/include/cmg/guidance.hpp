#pragma once

#include <string>
#include <vector>

#include "cmg/motion.hpp"
#include "cmg/skeleton.hpp"

namespace cmg {

struct GuidanceConfig {
  double eta = 0.1;
  int inner_steps = 20;
  int last_n = 10;     // final sampling steps with guidance enabled
  double clamp = 0.0;  // max L2 norm of one update; 0 disables

  void validate(int infer_steps) const;
};

struct Discrepancy {
  double value = 0.0;
  bool no_control = false;
};

/// Mean distance between controlled targets and the global joints of `mu_rel`.
Discrepancy ik_discrepancy(const Matrix& mu_rel, const SpatialControl& control, const Skeleton& skel, double fps);

/// d D / d mu_rel, propagated through relative_to_global. Writes D to `value` when given.
Matrix ik_discrepancy_grad(const Matrix& mu_rel, const SpatialControl& control, const Skeleton& skel, double fps,
                           double* value = nullptr);

struct GuideResult {
  Matrix mu;
  std::vector<double> trace;  // D before the first step and after each step
  bool aborted = false;       // a non-finite gradient stopped the guidance; mu is the input
  std::string warning;
};

/// inner_steps iterations of mu <- mu - eta * dD/dmu over the full relative vector.
GuideResult ik_guide_traced(const Matrix& mu_rel, const SpatialControl& control, const Skeleton& skel, double fps,
                            const GuidanceConfig& cfg);

/// As ik_guide_traced, returning only the adjusted motion. An aborted step prints a warning to stderr.
Matrix ik_guide(const Matrix& mu_rel, const SpatialControl& control, const Skeleton& skel, double fps,
                const GuidanceConfig& cfg);

}  // namespace cmg
