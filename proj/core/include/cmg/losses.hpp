#pragma once

#include <string>

#include "cmg/autodiff.hpp"
#include "cmg/motion.hpp"
#include "cmg/skeleton.hpp"

namespace cmg {

enum class ConMode {
  // Mask-weighted mean of per-entry distances.
  Normalized,
  // |M| * || E^s - x^g ||_2 over the whole f x J x 3 tensor, with E^s zero at uncontrolled entries.
  Literal,
};

ConMode parse_con_mode(const std::string& s);
std::string to_string(ConMode m);

struct LossWeights {
  double whole = 1.0;
  double con = 1.0;
  double foot = 1.0;
  double h_thresh = 0.05;  // m, foot height below which sliding is penalised
  ConMode con_mode = ConMode::Normalized;

  void validate() const;
};

struct LossParts {
  double total = 0.0;
  double whole = 0.0;
  double con = 0.0;
  double foot = 0.0;
};

/// Global joint positions (f x 3J) as a differentiable op over an f x D relative motion.
ad::Var<double> global_positions_op(ad::Var<double> rel, double fps, const Skeleton& skel);

struct LossVars {
  ad::Var<double> total, whole, con, foot;
};

/// Builds the three training losses on the tape. x_gt is f x D; control lives in the same
/// canonical frame as relative_to_global's output.
LossVars loss_graph(ad::Var<double> x0_hat, const Matrix& x_gt, const SpatialControl& control, const Skeleton& skel,
                    double fps, const LossWeights& lw);

LossParts loss_total(const Matrix& x0_hat, const Matrix& x_gt, const SpatialControl& control, const Skeleton& skel,
                     double fps, const LossWeights& lw);

/// loss_total plus its gradient with respect to x0_hat.
LossParts loss_total_grad(const Matrix& x0_hat, const Matrix& x_gt, const SpatialControl& control,
                          const Skeleton& skel, double fps, const LossWeights& lw, Matrix& grad);

}  // namespace cmg
