#include "cmg/guidance.hpp"

#include <cmath>
#include <iostream>

namespace cmg {

void GuidanceConfig::validate(int infer_steps) const {
  require(std::isfinite(eta) && eta > 0.0, "guidance.eta must be > 0");
  require(inner_steps >= 1, "guidance.inner_steps must be >= 1");
  require(last_n >= 0 && last_n <= infer_steps, "guidance.last_n must be in [0, diffusion.infer_steps]");
  require(clamp >= 0.0, "guidance.clamp must be >= 0");
}

namespace {

void check_control(const Matrix& mu_rel, const SpatialControl& control, const Skeleton& skel) {
  require(control.frames() == mu_rel.rows() && control.joints() == skel.joints(),
          "guidance: control shape " + shape_str(control.mask.rows(), control.mask.cols()) +
              " does not match motion (" + std::to_string(mu_rel.rows()) + " frames, " +
              std::to_string(skel.joints()) + " joints)");
  control.validate();
}

}  // namespace

Discrepancy ik_discrepancy(const Matrix& mu_rel, const SpatialControl& control, const Skeleton& skel, double fps) {
  check_control(mu_rel, control, skel);
  if (!control.any()) return {0.0, true};
  return {masked_mean_distance(relative_to_global_positions(mu_rel, fps, skel), control), false};
}

Matrix ik_discrepancy_grad(const Matrix& mu_rel, const SpatialControl& control, const Skeleton& skel, double fps,
                           double* value) {
  check_control(mu_rel, control, skel);
  if (!control.any()) {
    if (value) *value = 0.0;
    return Matrix::Zero(mu_rel.rows(), mu_rel.cols());
  }
  Matrix gpos;
  const double d = masked_mean_distance(relative_to_global_positions(mu_rel, fps, skel), control, &gpos);
  if (value) *value = d;
  return relative_to_global_vjp(mu_rel, fps, skel, gpos);
}

GuideResult ik_guide_traced(const Matrix& mu_rel, const SpatialControl& control, const Skeleton& skel, double fps,
                            const GuidanceConfig& cfg) {
  require(std::isfinite(cfg.eta) && cfg.eta > 0.0 && cfg.inner_steps >= 1 && cfg.clamp >= 0.0,
          "guidance: invalid configuration");
  GuideResult r;
  r.mu = mu_rel;
  check_control(mu_rel, control, skel);
  if (!control.any()) return r;
  double d = 0.0;
  for (int k = 0; k < cfg.inner_steps; ++k) {
    Matrix step = ik_discrepancy_grad(r.mu, control, skel, fps, &d) * cfg.eta;
    if (k == 0) r.trace.push_back(d);
    if (!step.allFinite()) {
      r.mu = mu_rel;
      r.aborted = true;
      r.warning = "guidance: non-finite gradient at inner step " + std::to_string(k) + "; step skipped";
      return r;
    }
    if (cfg.clamp > 0.0) {
      const double n = step.norm();
      if (n > cfg.clamp) step *= cfg.clamp / n;
    }
    r.mu -= step;
    r.trace.push_back(ik_discrepancy(r.mu, control, skel, fps).value);
  }
  return r;
}

Matrix ik_guide(const Matrix& mu_rel, const SpatialControl& control, const Skeleton& skel, double fps,
                const GuidanceConfig& cfg) {
  GuideResult r = ik_guide_traced(mu_rel, control, skel, fps, cfg);
  if (r.aborted) std::cerr << "warning: " << r.warning << "\n";
  return std::move(r.mu);
}

}  // namespace cmg
