#include "cmg/features.hpp"

#include <algorithm>
#include <cmath>

namespace cmg {

namespace {

constexpr int kBuckets = 8;
constexpr int kSpeedBins = 8;
constexpr double kSpeedBinWidth = 0.25;  // m/s

struct Running {
  double sum = 0.0, sq = 0.0;
  int n = 0;
  void add(double v) {
    sum += v;
    sq += v * v;
    ++n;
  }
  double mean() const { return n ? sum / n : 0.0; }
  double std() const { return n ? std::sqrt(std::max(0.0, sq / n - mean() * mean())) : 0.0; }
};

}  // namespace

RowVector motion_features(const GlobalMotion& glob_in, const Skeleton& skel) {
  require(glob_in.joints() == skel.joints(), "features: motion and skeleton joint counts differ");
  require(glob_in.frames() >= 1, "features: empty motion");
  require(glob_in.positions.allFinite(), "features: non-finite motion");
  const int f = glob_in.frames(), J = glob_in.joints();
  const int up = skel.up(), ga = skel.ground_a(), gb = skel.ground_b();
  const double fps = glob_in.fps;

  // Canonical placement: frame-0 root at the ground origin, facing +b.
  const Vector3 r0 = glob_in.at(0, 0);
  const GroundFrame frame{r0[ga], r0[gb], facing_yaw(glob_in, skel, 0, 0.0)};
  GlobalMotion g(f, J, fps);
  for (int t = 0; t < f; ++t) {
    for (int j = 0; j < J; ++j) g.set(t, j, frame.to_local(glob_in.at(t, j), skel));
  }

  RowVector out = RowVector::Zero(kMotionFeatureDim);
  int c = 0;
  auto bucket = [&](int j) { return std::min(kBuckets - 1, j * kBuckets / J); };

  // Joint speed mean/std per joint bucket.
  std::vector<Running> speed(kBuckets), height(kBuckets), spread(kBuckets);
  for (int t = 0; t + 1 < f; ++t) {
    for (int j = 0; j < J; ++j) speed[bucket(j)].add((g.at(t + 1, j) - g.at(t, j)).norm() * fps);
  }
  for (int b = 0; b < kBuckets; ++b) {
    out[c++] = speed[b].mean();
    out[c++] = speed[b].std();
  }

  // Root speed histogram.
  std::vector<double> hist(kSpeedBins, 0.0);
  double path_len = 0.0;
  for (int t = 0; t + 1 < f; ++t) {
    const Vector3 d = g.at(t + 1, 0) - g.at(t, 0);
    const double s = std::hypot(d[ga], d[gb]);
    path_len += s;
    hist[std::min(kSpeedBins - 1, static_cast<int>(s * fps / kSpeedBinWidth))] += 1.0 / (f - 1);
  }
  for (double h : hist) out[c++] = h;

  // Root displacement and path length.
  const Vector3 disp = g.at(f - 1, 0) - g.at(0, 0);
  out[c++] = disp[ga];
  out[c++] = disp[gb];
  out[c++] = path_len;

  // Root height.
  Running rh;
  double hmin = g.at(0, 0)[up], hmax = hmin;
  for (int t = 0; t < f; ++t) {
    const double h = g.at(t, 0)[up];
    rh.add(h);
    hmin = std::min(hmin, h);
    hmax = std::max(hmax, h);
  }
  out[c++] = rh.mean();
  out[c++] = rh.std();
  out[c++] = hmax - hmin;

  // Heading changes.
  Running yaw_rate;
  double prev = facing_yaw(g, skel, 0, 0.0), total = 0.0, total_abs = 0.0;
  for (int t = 1; t < f; ++t) {
    const double y = facing_yaw(g, skel, t, prev);
    const double dy = wrap_angle(y - prev);
    yaw_rate.add(std::abs(dy) * fps);
    total += dy;
    total_abs += std::abs(dy);
    prev = y;
  }
  out[c++] = yaw_rate.mean();
  out[c++] = yaw_rate.std();
  out[c++] = total;
  out[c++] = total_abs;

  // Bucket heights above the root and spread of root-relative positions.
  for (int t = 0; t < f; ++t) {
    const Vector3 root = g.at(t, 0);
    for (int j = 0; j < J; ++j) {
      const Vector3 rel = g.at(t, j) - root;
      height[bucket(j)].add(rel[up]);
      spread[bucket(j)].add(rel.norm());
    }
  }
  for (int b = 0; b < kBuckets; ++b) out[c++] = height[b].mean();
  for (int b = 0; b < kBuckets; ++b) out[c++] = spread[b].std();

  // Foot contact share (height < 5 cm, horizontal speed < 0.5 m/s).
  for (int foot : skel.feet()) {
    int contact = 0;
    for (int t = 0; t < f; ++t) {
      const int u = t + 1 < f ? t + 1 : std::max(0, t - 1);
      const Vector3 d = g.at(u, foot) - g.at(t, foot);
      if (g.at(t, foot)[up] < 0.05 && std::hypot(d[ga], d[gb]) * fps < 0.5) ++contact;
    }
    out[c++] = static_cast<double>(contact) / f;
  }

  // Extents over the whole clip and mean joint spread.
  Vector3 lo = g.at(0, 0), hi = lo;
  Running joint_spread;
  for (int t = 0; t < f; ++t) {
    for (int j = 0; j < J; ++j) {
      lo = lo.cwiseMin(g.at(t, j));
      hi = hi.cwiseMax(g.at(t, j));
      joint_spread.add((g.at(t, j) - g.at(t, 0)).norm());
    }
  }
  out[c++] = hi[ga] - lo[ga];
  out[c++] = hi[gb] - lo[gb];
  out[c++] = hi[up] - lo[up];
  out[c++] = joint_spread.mean();

  // Acceleration, jerk and halves.
  Running acc, jerk, first, second;
  double peak = 0.0;
  for (int t = 1; t + 1 < f; ++t) {
    for (int j = 0; j < J; ++j) {
      const Vector3 a = (g.at(t + 1, j) - 2.0 * g.at(t, j) + g.at(t - 1, j)) * fps * fps;
      acc.add(a.norm());
      if (t + 2 < f) {
        const Vector3 jk = (g.at(t + 2, j) - 3.0 * g.at(t + 1, j) + 3.0 * g.at(t, j) - g.at(t - 1, j)) * fps * fps * fps;
        jerk.add(jk.norm());
      }
    }
  }
  for (int t = 0; t + 1 < f; ++t) {
    for (int j = 0; j < J; ++j) {
      const double s = (g.at(t + 1, j) - g.at(t, j)).norm() * fps;
      (2 * t < f - 1 ? first : second).add(s);
      if (bucket(j) == kBuckets - 1) peak = std::max(peak, s);
    }
  }
  out[c++] = acc.mean();
  out[c++] = acc.std();
  out[c++] = jerk.mean();
  out[c++] = first.mean();
  out[c++] = second.mean();
  out[c++] = peak;
  return out;
}

FeatureSet motion_feature_set(const std::vector<GlobalMotion>& motions, const Skeleton& skel) {
  FeatureSet fs;
  fs.extractor_id = kMotionFeatureId;
  fs.X.resize(static_cast<Eigen::Index>(motions.size()), kMotionFeatureDim);
  for (std::size_t i = 0; i < motions.size(); ++i) fs.X.row(static_cast<Eigen::Index>(i)) = motion_features(motions[i], skel);
  return fs;
}

}  // namespace cmg
