#include "cmg/losses.hpp"

#include <cmath>

namespace cmg {

using ad::Tape;
using ad::Var;

ConMode parse_con_mode(const std::string& s) {
  if (s == "normalized") return ConMode::Normalized;
  if (s == "literal") return ConMode::Literal;
  throw ValidationError("loss.con_mode must be 'normalized' or 'literal', got '" + s + "'");
}

std::string to_string(ConMode m) { return m == ConMode::Normalized ? "normalized" : "literal"; }

void LossWeights::validate() const {
  require(whole >= 0 && con >= 0 && foot >= 0, "loss weights must be non-negative");
  require(std::isfinite(h_thresh), "loss.h_thresh must be finite");
}

Var<double> global_positions_op(Var<double> rel, double fps, const Skeleton& skel) {
  Matrix pos = relative_to_global_positions(rel.value(), fps, skel);
  return rel.tape->push(std::move(pos), rel.tape->needs_grad(rel.id), [rel, fps, skel](Tape<double>& tp, int self) {
    tp.grad(rel.id) += relative_to_global_vjp(tp.value(rel.id), fps, skel, tp.grad(self));
  });
}

namespace {

Var<double> scalar(Tape<double>& tape, double v, bool needs_grad, Tape<double>::Backward bw) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return tape.push(std::move(m), needs_grad, std::move(bw));
}

Var<double> whole_loss(Var<double> x, const Matrix& gt) {
  require_same_shape(x.value(), gt, "L_whole");
  Matrix diff = x.value() - gt;
  const double n = static_cast<double>(diff.size());
  const double v = diff.squaredNorm() / n;
  return scalar(*x.tape, v, x.tape->needs_grad(x.id), [x, diff = std::move(diff), n](Tape<double>& tp, int self) {
    tp.grad(x.id) += diff * (2.0 * tp.grad(self)(0, 0) / n);
  });
}

Var<double> con_loss(Var<double> g, const SpatialControl& control, ConMode mode) {
  const bool ng = g.tape->needs_grad(g.id);
  if (!control.any()) return scalar(*g.tape, 0.0, false, {});
  if (mode == ConMode::Normalized) {
    Matrix grad;
    const double v = masked_mean_distance(g.value(), control, &grad);
    return scalar(*g.tape, v, ng, [g, grad = std::move(grad)](Tape<double>& tp, int self) {
      tp.grad(g.id) += grad * tp.grad(self)(0, 0);
    });
  }
  Matrix targets = control.targets;
  for (Eigen::Index i = 0; i < control.mask.rows(); ++i) {
    for (Eigen::Index j = 0; j < control.mask.cols(); ++j) {
      if (control.mask(i, j) == 0.0) targets.block<1, 3>(i, 3 * j).setZero();
    }
  }
  Matrix diff = g.value() - targets;
  const double count = static_cast<double>(control.count());
  const double norm = diff.norm();
  return scalar(*g.tape, count * norm, ng, [g, diff = std::move(diff), count, norm](Tape<double>& tp, int self) {
    if (norm > 0.0) tp.grad(g.id) += diff * (count * tp.grad(self)(0, 0) / norm);
  });
}

Var<double> foot_loss(Var<double> g, const Skeleton& skel, double h_thresh) {
  const Matrix& p = g.value();
  const int f = static_cast<int>(p.rows());
  const int up = skel.up();
  Matrix grad = Matrix::Zero(p.rows(), p.cols());
  double v = 0.0;
  for (int j : skel.loss_feet()) {
    for (int i = 0; i + 1 < f; ++i) {
      if (!(p(i, 3 * j + up) < h_thresh)) continue;
      const Eigen::RowVector3d d = p.block<1, 3>(i + 1, 3 * j) - p.block<1, 3>(i, 3 * j);
      const double n = d.norm();
      v += n;
      if (n > 0.0) {
        grad.block<1, 3>(i + 1, 3 * j) += d / n;
        grad.block<1, 3>(i, 3 * j) -= d / n;
      }
    }
  }
  return scalar(*g.tape, v, g.tape->needs_grad(g.id), [g, grad = std::move(grad)](Tape<double>& tp, int self) {
    tp.grad(g.id) += grad * tp.grad(self)(0, 0);
  });
}

}  // namespace

LossVars loss_graph(Var<double> x0_hat, const Matrix& x_gt, const SpatialControl& control, const Skeleton& skel,
                    double fps, const LossWeights& lw) {
  lw.validate();
  require(control.frames() == x0_hat.rows() && control.joints() == skel.joints(),
          "loss: control shape does not match the motion");
  control.validate();
  LossVars out;
  out.whole = whole_loss(x0_hat, x_gt);
  Var<double> g = global_positions_op(x0_hat, fps, skel);
  out.con = con_loss(g, control, lw.con_mode);
  out.foot = foot_loss(g, skel, lw.h_thresh);
  out.total = ad::weighted_sum<double>({out.whole, out.con, out.foot}, {lw.whole, lw.con, lw.foot});
  return out;
}

LossParts loss_total(const Matrix& x0_hat, const Matrix& x_gt, const SpatialControl& control, const Skeleton& skel,
                     double fps, const LossWeights& lw) {
  Tape<double> tape(false);
  LossVars v = loss_graph(tape.constant(x0_hat), x_gt, control, skel, fps, lw);
  return {v.total.value()(0, 0), v.whole.value()(0, 0), v.con.value()(0, 0), v.foot.value()(0, 0)};
}

LossParts loss_total_grad(const Matrix& x0_hat, const Matrix& x_gt, const SpatialControl& control,
                          const Skeleton& skel, double fps, const LossWeights& lw, Matrix& grad) {
  Tape<double> tape(true);
  Var<double> x = tape.parameter(x0_hat);
  LossVars v = loss_graph(x, x_gt, control, skel, fps, lw);
  tape.backward(v.total);
  grad = tape.has_grad(x.id) ? tape.grad(x.id) : Matrix::Zero(x0_hat.rows(), x0_hat.cols());
  return {v.total.value()(0, 0), v.whole.value()(0, 0), v.con.value()(0, 0), v.foot.value()(0, 0)};
}

}  // namespace cmg
