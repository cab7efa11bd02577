#include "cmg/synthetic.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <random>

namespace cmg {

const std::vector<std::string>& synthetic_activity_texts() {
  static const std::vector<std::string> texts = {
      "a person squats down and stands back up",
      "a person waves with the right hand",
      "a person raises both arms above the head",
      "a person sways from side to side",
      "a person bows forward and straightens up",
      "a person claps hands in front of the chest",
      "a person reaches forward with the left hand",
      "a person looks around turning the upper body",
  };
  return texts;
}

namespace {

using Eigen::Matrix3d;

Matrix3d rot(const Vector3& axis, double angle) { return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix(); }

int find_joint(const Skeleton& skel, const char* name) {
  for (int j = 0; j < skel.joints(); ++j) {
    if (skel.names()[j] == name) return j;
  }
  return -1;
}

Vector3 solve_knee(const Vector3& hip, const Vector3& ankle, double l1, double l2, const Vector3& fwd) {
  const Vector3 v = ankle - hip;
  const double len = v.norm();
  const Vector3 u = len > 1e-12 ? Vector3(v / len) : Vector3(-fwd.cross(v).normalized());
  const double d = std::clamp(len, std::abs(l1 - l2) + 1e-6, l1 + l2 - 1e-6);
  const double a = (l1 * l1 - l2 * l2 + d * d) / (2.0 * d);
  const double h = std::sqrt(std::max(0.0, l1 * l1 - a * a));
  Vector3 p = fwd - fwd.dot(u) * u;
  p.normalize();
  return hip + a * u + h * p;
}

}  // namespace

GlobalMotion synthetic_motion(const Skeleton& skel, int activity, int frames, double fps, double amplitude,
                              double cycles, double phase) {
  const int n_act = static_cast<int>(synthetic_activity_texts().size());
  require(activity >= 0 && activity < n_act, "synthetic motion: activity index out of range");
  require(frames >= 2 && fps > 0.0, "synthetic motion: need at least 2 frames and positive fps");
  const int J = skel.joints();
  const int u = skel.up(), ga = skel.ground_a(), gb = skel.ground_b();
  Vector3 ea = Vector3::Zero(), eu = Vector3::Zero(), eb = Vector3::Zero();
  ea[ga] = 1.0;
  eu[u] = 1.0;
  eb[gb] = 1.0;
  const Vector3 bow_axis = eu.cross(eb), raise_axis = ea.cross(eu), fwd_axis = ea.cross(eb);

  const auto rest = skel.rest_positions(0.02);
  const auto& parents = skel.parents();
  const auto& feet = skel.feet();

  // Planted joints keep their rest positions; a knee is the parent of an ankle when that parent is
  // not the root.
  std::vector<int> role(J, 0);  // 0 = FK, 1 = planted, 2 = knee
  for (int k = 0; k < 4; ++k) role[feet[k]] = 1;
  for (int j = 1; j < J; ++j) {
    if (role[parents[j]] == 1) role[j] = 1;
  }
  for (int k : {feet[0], feet[2]}) {
    const int knee = parents[k];
    if (knee > 0 && role[knee] == 0 && parents[knee] > 0) role[knee] = 2;
  }

  const int spine1 = find_joint(skel, "spine1"), spine3 = find_joint(skel, "spine3");
  const int neck = find_joint(skel, "neck");
  const int lsh = find_joint(skel, "left_shoulder"), rsh = find_joint(skel, "right_shoulder");
  const int relb = find_joint(skel, "right_elbow");

  GlobalMotion g(frames, J, fps);
  std::vector<Matrix3d> local(J), world(J);
  std::vector<Vector3> pos(J);
  for (int i = 0; i < frames; ++i) {
    const double tau = static_cast<double>(i) / (frames - 1);
    const double w = 2.0 * std::numbers::pi * cycles * tau + phase;
    const double s = 0.5 * (1.0 - std::cos(w));  // 0 -> 1 -> 0 each cycle
    const double osc = std::sin(w);
    const double A = amplitude;
    for (auto& m : local) m.setIdentity();
    Vector3 dp = -0.04 * eu;
    const auto set = [&](int j, const Matrix3d& r) {
      if (j >= 0) local[j] = r;
    };
    switch (activity) {
      case 0:
        dp += -0.25 * A * s * eu + 0.03 * A * s * (-eb);
        set(spine3, rot(bow_axis, 0.35 * A * s));
        break;
      case 1:
        set(rsh, rot(raise_axis, -1.3 * A * (0.3 + 0.7 * s)));
        set(relb, rot(raise_axis, -0.5 - 0.6 * A * osc));
        break;
      case 2:
        set(lsh, rot(raise_axis, 1.4 * A * s));
        set(rsh, rot(raise_axis, -1.4 * A * s));
        break;
      case 3:
        dp += 0.06 * A * osc * ea;
        set(spine1, rot(eb, -0.2 * A * osc));
        break;
      case 4:
        dp += -0.03 * A * s * eb;
        set(spine1, rot(bow_axis, 0.7 * A * s));
        break;
      case 5:
        set(lsh, rot(fwd_axis, -(0.9 + 0.45 * A * s)));
        set(rsh, rot(fwd_axis, 0.9 + 0.45 * A * s));
        break;
      case 6:
        set(lsh, rot(fwd_axis, -1.4 * A * s));
        set(spine1, rot(bow_axis, 0.3 * A * s));
        break;
      case 7:
        set(neck, rot(eu, 0.8 * A * osc));
        set(spine3, rot(eu, 0.25 * A * osc));
        break;
    }
    pos[0] = rest[0] + dp;
    world[0] = local[0];
    for (int j = 1; j < J; ++j) {
      const int p = parents[j];
      world[j] = world[p] * local[j];
      if (role[j] == 1) {
        pos[j] = rest[j];
      } else if (role[j] == 0) {
        pos[j] = pos[p] + world[p] * skel.offsets()[j];
      }
    }
    for (int j = 1; j < J; ++j) {
      if (role[j] != 2) continue;
      int ankle = -1;
      for (int c = j + 1; c < J; ++c) {
        if (parents[c] == j && role[c] == 1) ankle = c;
      }
      pos[j] = ankle < 0 ? pos[parents[j]] + skel.offsets()[j]
                         : solve_knee(pos[parents[j]], pos[ankle], skel.offsets()[j].norm(),
                                      skel.offsets()[ankle].norm(), eb);
    }
    for (int j = 0; j < J; ++j) g.set(i, j, pos[j]);
  }
  return g;
}

std::vector<TrainSample> synthetic_dataset(const Skeleton& skel, int count, int frames, double fps,
                                           std::uint64_t seed) {
  require(count >= 1, "synthetic dataset: count must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const auto& texts = synthetic_activity_texts();
  std::vector<TrainSample> out;
  for (int k = 0; k < count; ++k) {
    const int act = k % static_cast<int>(texts.size());
    const double amp = 0.8 + 0.4 * U(rng);
    const double cycles = 1.0 + std::floor(U(rng) * 2.0);
    const double phase = 0.0;
    const GlobalMotion glob = synthetic_motion(skel, act, frames, fps, amp, cycles, phase);
    TrainSample s;
    s.text = texts[act];
    s.motion = global_to_relative(glob, skel);
    const Matrix canon = relative_to_global_positions(s.motion.data, fps, skel);
    s.control.targets = canon;
    s.control.mask = Matrix::Ones(frames, skel.joints());
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace cmg
