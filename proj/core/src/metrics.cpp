#include "cmg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>

namespace cmg {

void FeatureSet::validate() const {
  require(X.rows() >= 1 && X.cols() >= 1, "features: need at least one non-empty row");
  require(X.allFinite(), "features: non-finite value");
}

GaussianStats gaussian_stats(const Matrix& X) {
  require(X.rows() >= 2, "gaussian stats: need at least 2 samples");
  GaussianStats s;
  s.mean = X.colwise().mean();
  const Matrix centered = X.rowwise() - s.mean;
  s.cov = (centered.transpose() * centered) / static_cast<double>(X.rows() - 1);
  return s;
}

namespace {

Matrix sym_sqrt(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  require(a.mean.size() == b.mean.size(), "fid: feature dimensions differ");
  const Eigen::Index d = a.mean.size();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd s1 = a.cov + kFidRidge * I;
  const Eigen::MatrixXd s2 = b.cov + kFidRidge * I;
  const Eigen::MatrixXd r2 = sym_sqrt(s2);
  const Eigen::MatrixXd inner = r2 * s1 * r2;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  const double cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return (a.mean - b.mean).squaredNorm() + s1.trace() + s2.trace() - 2.0 * cross;
}

double fid(const Matrix& real, const Matrix& gen) {
  require(real.cols() == gen.cols(), "fid: feature dimensions differ");
  require(real.rows() >= 2 && gen.rows() >= 2, "fid: need at least 2 samples per set");
  require(real.allFinite() && gen.allFinite(), "fid: non-finite features");
  return frechet_distance(gaussian_stats(real), gaussian_stats(gen));
}

double fid(const FeatureSet& real, const FeatureSet& gen) {
  real.validate();
  gen.validate();
  require(real.extractor_id == gen.extractor_id,
          "fid: feature sets come from different extractors ('" + real.extractor_id + "' vs '" + gen.extractor_id + "')");
  return fid(real.X, gen.X);
}

RPrecisionResult r_precision(const FeatureSet& motion, const FeatureSet& text, int pool_size, std::vector<int> ks,
                             std::uint64_t seed) {
  motion.validate();
  text.validate();
  require(motion.size() == text.size(), "r_precision: motion and text sets must pair row by row");
  require(motion.dim() == text.dim(), "r_precision: feature dimensions differ");
  require(pool_size >= 1, "r_precision: pool size must be >= 1");
  require(motion.size() >= pool_size, "r_precision: need at least pool_size (" + std::to_string(pool_size) +
                                          ") pairs, got " + std::to_string(motion.size()));
  for (int k : ks) require(k >= 1, "r_precision: k must be >= 1");
  const int N = motion.size();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<int> others(N - 1);
  std::vector<long long> hits(ks.size(), 0);
  for (int i = 0; i < N; ++i) {
    for (int j = 0, w = 0; j < N; ++j) {
      if (j != i) others[w++] = j;
    }
    // Partial Fisher-Yates: the first pool_size - 1 entries become the negatives.
    for (int k = 0; k < pool_size - 1; ++k) {
      const int pick = std::uniform_int_distribution<int>(k, N - 2)(rng);
      std::swap(others[k], others[pick]);
    }
    const double d_true = (motion.X.row(i) - text.X.row(i)).norm();
    const double key_true = unit(rng);
    int rank = 0;
    for (int k = 0; k < pool_size - 1; ++k) {
      const double d = (motion.X.row(i) - text.X.row(others[k])).norm();
      const double key = unit(rng);
      if (d < d_true || (d == d_true && key < key_true)) ++rank;
    }
    for (std::size_t q = 0; q < ks.size(); ++q) {
      if (rank < ks[q]) ++hits[q];
    }
  }
  RPrecisionResult out;
  out.ks = ks;
  for (long long h : hits) out.accuracy.push_back(static_cast<double>(h) / N);
  return out;
}

double diversity(const FeatureSet& feats, int subset_pairs, std::uint64_t seed) {
  feats.validate();
  require(subset_pairs >= 1, "diversity: subset_pairs must be >= 1");
  const int N = feats.size();
  require(N >= 2, "diversity: need at least 2 feature vectors");
  const int S = std::min(subset_pairs, N / 2);
  std::vector<int> perm(N);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  double total = 0.0;
  for (int k = 0; k < S; ++k) total += (feats.X.row(perm[k]) - feats.X.row(perm[S + k])).norm();
  return total / S;
}

double foot_skating_ratio(const GlobalMotion& glob, const Skeleton& skel, FootSkateConfig cfg) {
  require(glob.joints() == skel.joints(), "foot skating: motion and skeleton joint counts differ");
  const int f = glob.frames();
  if (f < 2) return 0.0;
  const int up = skel.up(), ga = skel.ground_a(), gb = skel.ground_b();
  int skating = 0;
  for (int t = 0; t + 1 < f; ++t) {
    bool any = false;
    for (int j : skel.feet()) {
      const Vector3 p = glob.at(t, j), q = glob.at(t + 1, j);
      const double slide = std::hypot(q[ga] - p[ga], q[gb] - p[gb]);
      if (p[up] < cfg.height && slide > cfg.slide) any = true;
    }
    skating += any ? 1 : 0;
  }
  return static_cast<double>(skating) / (f - 1);
}

namespace {

struct Tally {
  int entries = 0;
  int beyond = 0;
  double dist = 0.0;
};

Tally tally(const GlobalMotion& glob, const SpatialControl& control, double threshold) {
  require(glob.frames() == control.frames() && glob.joints() == control.joints(),
          "spatial errors: motion and control shapes differ");
  control.validate();
  Tally t;
  for (int i = 0; i < control.frames(); ++i) {
    for (int j = 0; j < control.joints(); ++j) {
      if (control.mask(i, j) == 0.0) continue;
      const double d = (glob.at(i, j) - control.target(i, j)).norm();
      ++t.entries;
      t.dist += d;
      if (d > threshold) ++t.beyond;
    }
  }
  return t;
}

}  // namespace

SpatialErrorReport spatial_errors(const std::vector<GlobalMotion>& globs, const std::vector<SpatialControl>& controls,
                                  double threshold) {
  require(globs.size() == controls.size(), "spatial errors: need one control per motion");
  require(threshold >= 0.0, "spatial errors: threshold must be >= 0");
  SpatialErrorReport r;
  r.threshold = threshold;
  int failed = 0, beyond = 0;
  double dist = 0.0;
  for (std::size_t k = 0; k < globs.size(); ++k) {
    const Tally t = tally(globs[k], controls[k], threshold);
    if (t.entries == 0) continue;
    ++r.sequences;
    r.entries += t.entries;
    beyond += t.beyond;
    dist += t.dist;
    failed += t.beyond > 0 ? 1 : 0;
  }
  if (r.sequences == 0) return r;
  r.defined = true;
  r.traj_err = static_cast<double>(failed) / r.sequences;
  r.loc_err = static_cast<double>(beyond) / r.entries;
  r.avg_err = dist / r.entries;
  return r;
}

SpatialErrorReport spatial_errors(const GlobalMotion& glob, const SpatialControl& control, double threshold) {
  return spatial_errors(std::vector<GlobalMotion>{glob}, std::vector<SpatialControl>{control}, threshold);
}

}  // namespace cmg
