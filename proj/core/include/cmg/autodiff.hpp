#pragma once

// Minimal tape-based reverse-mode differentiation over row-major Eigen matrices. Each op computes
// its value eagerly and, when recording and any input needs a gradient, registers a closure that
// pushes the output gradient back to its inputs.

#include <cmath>
#include <deque>
#include <functional>
#include <vector>

#include "cmg/types.hpp"

namespace cmg::ad {

template <typename T>
class Tape;

template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  const MatrixT<T>& value() const { return tape->value(id); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

template <typename T>
class Tape {
 public:
  using Mat = MatrixT<T>;
  using Backward = std::function<void(Tape&, int)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var<T> push(Mat value, bool needs_grad, Backward backward = {}) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = record_ && needs_grad;
    if (n.needs_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
  }

  Var<T> constant(Mat value) { return push(std::move(value), false); }
  Var<T> parameter(Mat value) { return push(std::move(value), true); }

  const Mat& value(int id) const { return nodes_[id].value; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }

  Mat& grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }
  bool has_grad(int id) const { return nodes_[id].grad.size() != 0; }

  /// Seeds d(root)/d(root) = 1 and runs every recorded closure in reverse creation order.
  void backward(Var<T> root) {
    if (root.value().size() != 1) throw ValidationError("backward: root must be a scalar");
    if (!nodes_[root.id].needs_grad) return;
    grad(root.id)(0, 0) = T(1);
    for (int id = root.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.needs_grad && n.backward && n.grad.size() != 0) n.backward(*this, id);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    Backward backward;
  };
  std::deque<Node> nodes_;
  bool record_;
};

template <typename T>
using StridedMap = Eigen::Map<MatrixT<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const MatrixT<T>, 0, Eigen::OuterStride<>>;

// Rows r, r + J, r + 2J, ... of a row-major (f*J) x C matrix viewed as an f x C block.
template <typename T>
ConstStridedMap<T> joint_rows(const MatrixT<T>& m, int joint, int J) {
  return ConstStridedMap<T>(m.data() + joint * m.cols(), m.rows() / J, m.cols(), Eigen::OuterStride<>(J * m.cols()));
}
template <typename T>
StridedMap<T> joint_rows(MatrixT<T>& m, int joint, int J) {
  return StridedMap<T>(m.data() + joint * m.cols(), m.rows() / J, m.cols(), Eigen::OuterStride<>(J * m.cols()));
}

namespace detail {
template <typename T>
bool any_grad(std::initializer_list<Var<T>> vs) {
  for (const auto& v : vs) {
    if (v.tape->needs_grad(v.id)) return true;
  }
  return false;
}
}  // namespace detail

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Tape<T>& t = *a.tape;
  require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  MatrixT<T> out = a.value() * b.value();
  return t.push(std::move(out), detail::any_grad({a, b}), [a, b](Tape<T>& tp, int self) {
    const auto& g = tp.grad(self);
    if (tp.needs_grad(a.id)) tp.grad(a.id).noalias() += g * tp.value(b.id).transpose();
    if (tp.needs_grad(b.id)) tp.grad(b.id).noalias() += tp.value(a.id).transpose() * g;
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape(a.value(), b.value(), "add");
  MatrixT<T> out = a.value() + b.value();
  return a.tape->push(std::move(out), detail::any_grad({a, b}), [a, b](Tape<T>& tp, int self) {
    const auto& g = tp.grad(self);
    if (tp.needs_grad(a.id)) tp.grad(a.id) += g;
    if (tp.needs_grad(b.id)) tp.grad(b.id) += g;
  });
}

/// a + row broadcast over every row of a; `row` is 1 x cols(a).
template <typename T>
Var<T> add_row(Var<T> a, Var<T> row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row: expected a 1 x C row");
  MatrixT<T> out = a.value().rowwise() + row.value().row(0);
  return a.tape->push(std::move(out), detail::any_grad({a, row}), [a, row](Tape<T>& tp, int self) {
    const auto& g = tp.grad(self);
    if (tp.needs_grad(a.id)) tp.grad(a.id) += g;
    if (tp.needs_grad(row.id)) tp.grad(row.id) += g.colwise().sum();
  });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  MatrixT<T> out = a.value() * s;
  return a.tape->push(std::move(out), detail::any_grad({a}), [a, s](Tape<T>& tp, int self) {
    tp.grad(a.id) += tp.grad(self) * s;
  });
}

template <typename T>
Var<T> silu(Var<T> a) {
  const auto& x = a.value();
  MatrixT<T> sig = (T(1) + (-x.array()).exp()).inverse().matrix();
  MatrixT<T> out = (x.array() * sig.array()).matrix();
  return a.tape->push(std::move(out), detail::any_grad({a}), [a, sig = std::move(sig)](Tape<T>& tp, int self) {
    const auto& xv = tp.value(a.id);
    tp.grad(a.id).array() += tp.grad(self).array() * sig.array() * (T(1) + xv.array() * (T(1) - sig.array()));
  });
}

/// Per-row layer normalisation with learned gain and bias (both 1 x C).
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5)) {
  const auto& xv = x.value();
  const Eigen::Index C = xv.cols();
  require(gain.cols() == C && bias.cols() == C && gain.rows() == 1 && bias.rows() == 1, "layer_norm: shape");
  MatrixT<T> xhat(xv.rows(), C);
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const T mean = xv.row(r).mean();
    const T var = (xv.row(r).array() - mean).square().mean();
    inv_std(r) = T(1) / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mean) * inv_std(r);
  }
  MatrixT<T> out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
  return x.tape->push(std::move(out), detail::any_grad({x, gain, bias}),
                      [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& tp, int self) {
                        const auto& g = tp.grad(self);
                        if (tp.needs_grad(gain.id)) tp.grad(gain.id) += (g.array() * xhat.array()).colwise().sum().matrix();
                        if (tp.needs_grad(bias.id)) tp.grad(bias.id) += g.colwise().sum();
                        if (!tp.needs_grad(x.id)) return;
                        MatrixT<T> dxhat = (g.array().rowwise() * tp.value(gain.id).row(0).array()).matrix();
                        auto& gx = tp.grad(x.id);
                        const T invC = T(1) / static_cast<T>(dxhat.cols());
                        for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
                          const T m1 = dxhat.row(r).sum() * invC;
                          const T m2 = dxhat.row(r).dot(xhat.row(r)) * invC;
                          gx.row(r).array() += inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
                        }
                      });
}

/// Row-wise select: row r of the output is row r of `on` when mask[r] != 0, else row r of `off`.
template <typename T>
Var<T> select_rows(Var<T> on, Var<T> off, const std::vector<unsigned char>& mask) {
  require_same_shape(on.value(), off.value(), "select_rows");
  require(static_cast<Eigen::Index>(mask.size()) == on.rows(), "select_rows: mask length mismatch");
  MatrixT<T> out(on.rows(), on.cols());
  for (Eigen::Index r = 0; r < out.rows(); ++r) out.row(r) = mask[r] ? on.value().row(r) : off.value().row(r);
  return on.tape->push(std::move(out), detail::any_grad({on, off}), [on, off, mask](Tape<T>& tp, int self) {
    const auto& g = tp.grad(self);
    const bool gon = tp.needs_grad(on.id), goff = tp.needs_grad(off.id);
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      if (mask[r]) {
        if (gon) tp.grad(on.id).row(r) += g.row(r);
      } else if (goff) {
        tp.grad(off.id).row(r) += g.row(r);
      }
    }
  });
}

/// Joint-specific affine map. x: (f*J) x Cin with joint = row % J; w: (J*Cin) x Cout stacked per
/// joint; b: J x Cout.
template <typename T>
Var<T> per_joint_linear(Var<T> x, Var<T> w, Var<T> b, int J) {
  const Eigen::Index cin = x.cols(), cout = w.cols();
  require(x.rows() % J == 0, "per_joint_linear: rows must be a multiple of J");
  require(w.rows() == J * cin && b.rows() == J && b.cols() == cout, "per_joint_linear: weight shape");
  MatrixT<T> out(x.rows(), cout);
  for (int j = 0; j < J; ++j) {
    auto oj = joint_rows<T>(out, j, J);
    oj.noalias() = joint_rows<T>(x.value(), j, J) * w.value().middleRows(j * cin, cin);
    oj.rowwise() += b.value().row(j);
  }
  return x.tape->push(std::move(out), detail::any_grad({x, w, b}), [x, w, b, J, cin](Tape<T>& tp, int self) {
    auto& g = tp.grad(self);
    for (int j = 0; j < J; ++j) {
      const auto gj = joint_rows<T>(static_cast<const MatrixT<T>&>(g), j, J);
      if (tp.needs_grad(x.id)) {
        auto gx = joint_rows<T>(tp.grad(x.id), j, J);
        gx.noalias() += gj * tp.value(w.id).middleRows(j * cin, cin).transpose();
      }
      if (tp.needs_grad(w.id)) {
        tp.grad(w.id).middleRows(j * cin, cin).noalias() += joint_rows<T>(tp.value(x.id), j, J).transpose() * gj;
      }
      if (tp.needs_grad(b.id)) tp.grad(b.id).row(j) += gj.colwise().sum();
    }
  });
}

/// Efficient attention with one head per joint: head j attends over the f frames of joint j.
/// out_j = softmax_features(Q_j) * (softmax_positions(K_j)^T V_j).
template <typename T>
Var<T> efficient_attention(Var<T> q, Var<T> k, Var<T> v, int J) {
  require_same_shape(q.value(), k.value(), "efficient_attention");
  require_same_shape(q.value(), v.value(), "efficient_attention");
  require(q.rows() % J == 0, "efficient_attention: rows must be a multiple of J");
  const Eigen::Index L = q.cols();
  MatrixT<T> out(q.rows(), L);
  std::vector<MatrixT<T>> qs(J), ks(J), ctxs(J);
  for (int j = 0; j < J; ++j) {
    MatrixT<T> qj = joint_rows<T>(q.value(), j, J);
    for (Eigen::Index r = 0; r < qj.rows(); ++r) {
      qj.row(r).array() = (qj.row(r).array() - qj.row(r).maxCoeff()).exp();
      qj.row(r) /= qj.row(r).sum();
    }
    MatrixT<T> kj = joint_rows<T>(k.value(), j, J);
    for (Eigen::Index c = 0; c < L; ++c) {
      kj.col(c).array() = (kj.col(c).array() - kj.col(c).maxCoeff()).exp();
      kj.col(c) /= kj.col(c).sum();
    }
    ctxs[j].noalias() = kj.transpose() * joint_rows<T>(v.value(), j, J);
    joint_rows<T>(out, j, J).noalias() = qj * ctxs[j];
    qs[j] = std::move(qj);
    ks[j] = std::move(kj);
  }
  return q.tape->push(
      std::move(out), detail::any_grad({q, k, v}),
      [q, k, v, J, qs = std::move(qs), ks = std::move(ks), ctxs = std::move(ctxs)](Tape<T>& tp, int self) {
        const MatrixT<T>& g = tp.grad(self);
        for (int j = 0; j < J; ++j) {
          const MatrixT<T> gj = joint_rows<T>(g, j, J);
          const MatrixT<T> dctx = qs[j].transpose() * gj;
          if (tp.needs_grad(q.id)) {
            MatrixT<T> dqs = gj * ctxs[j].transpose();
            auto gq = joint_rows<T>(tp.grad(q.id), j, J);
            for (Eigen::Index r = 0; r < dqs.rows(); ++r) {
              const T dot = dqs.row(r).dot(qs[j].row(r));
              gq.row(r).array() += qs[j].row(r).array() * (dqs.row(r).array() - dot);
            }
          }
          if (tp.needs_grad(k.id)) {
            MatrixT<T> dks = joint_rows<T>(tp.value(v.id), j, J) * dctx.transpose();
            auto gk = joint_rows<T>(tp.grad(k.id), j, J);
            for (Eigen::Index c = 0; c < dks.cols(); ++c) {
              const T dot = dks.col(c).dot(ks[j].col(c));
              gk.col(c).array() += ks[j].col(c).array() * (dks.col(c).array() - dot);
            }
          }
          if (tp.needs_grad(v.id)) {
            auto gv = joint_rows<T>(tp.grad(v.id), j, J);
            gv.noalias() += ks[j] * dctx;
          }
        }
      });
}

/// Per-frame linear mixing across joints: each contiguous block of J rows is left-multiplied by w (J x J).
template <typename T>
Var<T> joint_mix(Var<T> x, Var<T> w, int J) {
  require(w.rows() == J && w.cols() == J && x.rows() % J == 0, "joint_mix: shape");
  const Eigen::Index frames = x.rows() / J;
  MatrixT<T> out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < frames; ++i) out.middleRows(i * J, J).noalias() = w.value() * x.value().middleRows(i * J, J);
  return x.tape->push(std::move(out), detail::any_grad({x, w}), [x, w, J, frames](Tape<T>& tp, int self) {
    const auto& g = tp.grad(self);
    for (Eigen::Index i = 0; i < frames; ++i) {
      if (tp.needs_grad(x.id)) tp.grad(x.id).middleRows(i * J, J).noalias() += tp.value(w.id).transpose() * g.middleRows(i * J, J);
      if (tp.needs_grad(w.id)) tp.grad(w.id).noalias() += g.middleRows(i * J, J) * tp.value(x.id).middleRows(i * J, J).transpose();
    }
  });
}

/// Scatters a per-joint channel block ((f*J) x C) into an f x D matrix using `map`
/// (J*C entries, -1 = dropped).
template <typename T>
Var<T> unpack_joint_channels(Var<T> packed, const std::vector<int>& map, int J, int D) {
  const Eigen::Index C = packed.cols();
  const Eigen::Index frames = packed.rows() / J;
  require(static_cast<Eigen::Index>(map.size()) == J * C, "unpack_joint_channels: map size");
  MatrixT<T> out = MatrixT<T>::Zero(frames, D);
  for (Eigen::Index i = 0; i < frames; ++i) {
    for (int j = 0; j < J; ++j) {
      for (Eigen::Index c = 0; c < C; ++c) {
        const int col = map[j * C + c];
        if (col >= 0) out(i, col) = packed.value()(i * J + j, c);
      }
    }
  }
  return packed.tape->push(std::move(out), detail::any_grad({packed}), [packed, map, J, C, frames](Tape<T>& tp, int self) {
    const auto& g = tp.grad(self);
    auto& gp = tp.grad(packed.id);
    for (Eigen::Index i = 0; i < frames; ++i) {
      for (int j = 0; j < J; ++j) {
        for (Eigen::Index c = 0; c < C; ++c) {
          const int col = map[j * C + c];
          if (col >= 0) gp(i * J + j, c) += g(i, col);
        }
      }
    }
  });
}

/// Weighted sum of 1x1 terms.
template <typename T>
Var<T> weighted_sum(const std::vector<Var<T>>& terms, const std::vector<T>& weights) {
  require(!terms.empty() && terms.size() == weights.size(), "weighted_sum: size mismatch");
  T total = 0;
  bool grad = false;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    total += weights[i] * terms[i].value()(0, 0);
    grad = grad || terms[i].tape->needs_grad(terms[i].id);
  }
  MatrixT<T> out(1, 1);
  out(0, 0) = total;
  return terms[0].tape->push(std::move(out), grad, [terms, weights](Tape<T>& tp, int self) {
    const T g = tp.grad(self)(0, 0);
    for (std::size_t i = 0; i < terms.size(); ++i) {
      if (tp.needs_grad(terms[i].id)) tp.grad(terms[i].id)(0, 0) += weights[i] * g;
    }
  });
}

}  // namespace cmg::ad
