#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cmg/motion.hpp"
#include "cmg/skeleton.hpp"

namespace cmg {

/// N feature vectors (rows) from one extractor.
struct FeatureSet {
  Matrix X;
  std::string extractor_id;

  int size() const { return static_cast<int>(X.rows()); }
  int dim() const { return static_cast<int>(X.cols()); }
  void validate() const;
};

struct GaussianStats {
  RowVector mean;
  Matrix cov;  // unbiased (N - 1)
};
GaussianStats gaussian_stats(const Matrix& X);

constexpr double kFidRidge = 1e-10;

/// Frechet distance between Gaussians fitted to the two sets; covariances get a kFidRidge ridge and
/// the cross term is the trace of sqrt(S2^1/2 S1 S2^1/2) from a symmetric eigendecomposition.
double fid(const FeatureSet& real, const FeatureSet& gen);
double fid(const Matrix& real, const Matrix& gen);
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

struct RPrecisionResult {
  std::vector<int> ks;
  std::vector<double> accuracy;  // accuracy[i] is accuracy@ks[i]
};

/// Row i of motion_feats pairs with row i of text_feats. Each motion ranks its own text against
/// pool_size - 1 distinct negatives drawn with `seed`; equal distances are ordered at random.
RPrecisionResult r_precision(const FeatureSet& motion_feats, const FeatureSet& text_feats, int pool_size = 32,
                             std::vector<int> ks = {1, 2, 3}, std::uint64_t seed = 0);

/// Mean distance over S = min(subset_pairs, floor(N / 2)) disjoint pairs from a seeded permutation.
double diversity(const FeatureSet& feats, int subset_pairs = 300, std::uint64_t seed = 0);

struct FootSkateConfig {
  double height = 0.05;  // m
  double slide = 0.0025;  // m per frame, horizontal
};

/// Fraction of frame transitions t -> t+1 in which some foot joint is below `height` at t and moves
/// more than `slide` horizontally. 0 for clips shorter than two frames.
double foot_skating_ratio(const GlobalMotion& glob, const Skeleton& skel, FootSkateConfig cfg = {});

struct SpatialErrorReport {
  double traj_err = 0.0;  // share of sequences with any controlled entry beyond the threshold
  double loc_err = 0.0;   // share of controlled entries beyond the threshold
  double avg_err = 0.0;   // mean distance over controlled entries, m
  double threshold = 0.5;
  int entries = 0;
  int sequences = 0;
  bool defined = false;   // false when no sequence had a controlled entry
};

/// "Beyond the threshold" is strict: distance > threshold.
SpatialErrorReport spatial_errors(const GlobalMotion& glob, const SpatialControl& control, double threshold = 0.5);
/// traj_err averages the per-sequence flag over sequences with a non-empty mask; loc_err and avg_err
/// pool every controlled entry of the batch.
SpatialErrorReport spatial_errors(const std::vector<GlobalMotion>& globs, const std::vector<SpatialControl>& controls,
                                  double threshold = 0.5);

}  // namespace cmg
