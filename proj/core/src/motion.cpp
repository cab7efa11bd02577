#include "cmg/motion.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>

namespace cmg {

RelativeLayout::RelativeLayout(int joints) : J(joints), D(relative_dim(joints)) {
  require(joints >= 2, "relative layout: need at least 2 joints");
  local_velocities = local_positions + 3 * (J - 1);
  rotations = local_velocities + 3 * J;
  contacts = rotations + 6 * (J - 1);
}

int relative_dim(int joints) { return 1 + 2 + 1 + 3 * (joints - 1) + 3 * joints + 6 * (joints - 1) + 4; }

std::vector<int> RelativeLayout::joint_channel_map() const {
  std::vector<int> map(static_cast<std::size_t>(J) * kJointChannels, -1);
  int* root = map.data();
  root[0] = root_yaw_rate;
  root[1] = root_velocity;
  root[2] = root_velocity + 1;
  root[3] = root_height;
  for (int a = 0; a < 3; ++a) root[4 + a] = velocity_col(0, a);
  for (int k = 0; k < 4; ++k) root[7 + k] = contacts + k;
  for (int j = 1; j < J; ++j) {
    int* blk = map.data() + static_cast<std::size_t>(j) * kJointChannels;
    for (int a = 0; a < 3; ++a) blk[a] = position_col(j, a);
    for (int a = 0; a < 3; ++a) blk[3 + a] = velocity_col(j, a);
    for (int k = 0; k < 6; ++k) blk[6 + k] = rotation_col(j, k);
  }
  return map;
}

SpatialControl SpatialControl::empty(int frames, int joints) {
  SpatialControl c;
  c.targets = Matrix::Zero(frames, 3 * joints);
  c.mask = Matrix::Zero(frames, joints);
  return c;
}

int SpatialControl::count() const {
  int n = 0;
  for (Eigen::Index i = 0; i < mask.size(); ++i) n += mask.data()[i] != 0.0 ? 1 : 0;
  return n;
}

void SpatialControl::set(int frame, int joint, const Vector3& p) {
  targets.block<1, 3>(frame, 3 * joint) = p.transpose();
  mask(frame, joint) = 1.0;
}

void SpatialControl::validate() const {
  require(targets.rows() == mask.rows() && targets.cols() == 3 * mask.cols(),
          "spatial control: targets " + shape_str(targets.rows(), targets.cols()) + " inconsistent with mask " +
              shape_str(mask.rows(), mask.cols()));
  for (Eigen::Index i = 0; i < mask.rows(); ++i) {
    for (Eigen::Index j = 0; j < mask.cols(); ++j) {
      const double m = mask(i, j);
      if (m != 0.0 && m != 1.0) throw ValidationError("spatial control: mask entries must be 0 or 1");
      if (m == 1.0 && !targets.block<1, 3>(i, 3 * j).allFinite()) {
        throw ValidationError("spatial control: non-finite target at a controlled entry");
      }
    }
  }
}

double masked_mean_distance(const Matrix& positions, const SpatialControl& control, Matrix* grad) {
  require(positions.rows() == control.mask.rows() && positions.cols() == 3 * control.mask.cols(),
          "masked distance: positions " + shape_str(positions.rows(), positions.cols()) + " do not match mask " +
              shape_str(control.mask.rows(), control.mask.cols()));
  if (grad) *grad = Matrix::Zero(positions.rows(), positions.cols());
  const int n = control.count();
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < control.mask.rows(); ++i) {
    for (Eigen::Index j = 0; j < control.mask.cols(); ++j) {
      if (control.mask(i, j) == 0.0) continue;
      const Eigen::RowVector3d d = positions.block<1, 3>(i, 3 * j) - control.targets.block<1, 3>(i, 3 * j);
      const double dist = d.norm();
      sum += dist;
      if (grad && dist > 0.0) grad->block<1, 3>(i, 3 * j) = d / (dist * n);
    }
  }
  return sum / n;
}

double wrap_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  a = std::fmod(a + std::numbers::pi, kTwoPi);
  if (a < 0) a += kTwoPi;
  return a - std::numbers::pi;
}

namespace {

struct RootTrack {
  std::vector<double> yaw, a, b;
};

RootTrack integrate_root(const Matrix& rel, double fps, const RelativeLayout& L) {
  const int f = static_cast<int>(rel.rows());
  RootTrack r;
  r.yaw.assign(f, 0.0);
  r.a.assign(f, 0.0);
  r.b.assign(f, 0.0);
  for (int i = 1; i < f; ++i) {
    double da = 0, db = 0;
    rotate_ground(r.yaw[i - 1], rel(i - 1, L.root_velocity), rel(i - 1, L.root_velocity + 1), da, db);
    r.a[i] = r.a[i - 1] + da / fps;
    r.b[i] = r.b[i - 1] + db / fps;
    r.yaw[i] = r.yaw[i - 1] + rel(i - 1, L.root_yaw_rate) / fps;
  }
  return r;
}

void check_rel(const Matrix& rel, double fps, const Skeleton& skel) {
  const int D = relative_dim(skel.joints());
  if (rel.cols() != D) {
    throw ValidationError("relative motion has " + std::to_string(rel.cols()) + " channels, skeleton with " +
                          std::to_string(skel.joints()) + " joints needs " + std::to_string(D));
  }
  require(rel.rows() >= 1, "relative motion: need at least one frame");
  require(fps > 0.0, "relative motion: fps must be positive");
}

}  // namespace

Matrix relative_to_global_positions(const Matrix& rel, double fps, const Skeleton& skel) {
  check_rel(rel, fps, skel);
  const RelativeLayout L(skel.joints());
  const int f = static_cast<int>(rel.rows());
  const int u = skel.up(), ga = skel.ground_a(), gb = skel.ground_b();
  const RootTrack root = integrate_root(rel, fps, L);

  Matrix out(f, 3 * L.J);
  for (int i = 0; i < f; ++i) {
    const double h = rel(i, L.root_height);
    out(i, ga) = root.a[i];
    out(i, u) = h;
    out(i, gb) = root.b[i];
    for (int j = 1; j < L.J; ++j) {
      double wa = 0, wb = 0;
      rotate_ground(root.yaw[i], rel(i, L.position_col(j, ga)), rel(i, L.position_col(j, gb)), wa, wb);
      out(i, 3 * j + ga) = root.a[i] + wa;
      out(i, 3 * j + u) = h + rel(i, L.position_col(j, u));
      out(i, 3 * j + gb) = root.b[i] + wb;
    }
  }
  return out;
}

GlobalMotion relative_to_global(const RelativeMotion& rel, const Skeleton& skel) {
  GlobalMotion g;
  g.positions = relative_to_global_positions(rel.data, rel.fps, skel);
  g.fps = rel.fps;
  return g;
}

Matrix relative_to_global_vjp(const Matrix& rel, double fps, const Skeleton& skel, const Matrix& grad_positions) {
  check_rel(rel, fps, skel);
  const RelativeLayout L(skel.joints());
  const int f = static_cast<int>(rel.rows());
  require(grad_positions.rows() == f && grad_positions.cols() == 3 * L.J,
          "relative_to_global_vjp: gradient shape mismatch");
  const int u = skel.up(), ga = skel.ground_a(), gb = skel.ground_b();
  const RootTrack root = integrate_root(rel, fps, L);

  Matrix grad = Matrix::Zero(f, L.D);
  std::vector<double> dyaw(f, 0.0), droot_a(f, 0.0), droot_b(f, 0.0);
  for (int i = 0; i < f; ++i) {
    const double c = std::cos(root.yaw[i]), s = std::sin(root.yaw[i]);
    for (int j = 0; j < L.J; ++j) {
      const double g_a = grad_positions(i, 3 * j + ga);
      const double g_u = grad_positions(i, 3 * j + u);
      const double g_b = grad_positions(i, 3 * j + gb);
      grad(i, L.root_height) += g_u;
      droot_a[i] += g_a;
      droot_b[i] += g_b;
      if (j == 0) continue;
      const double la = rel(i, L.position_col(j, ga));
      const double lb = rel(i, L.position_col(j, gb));
      grad(i, L.position_col(j, u)) += g_u;
      grad(i, L.position_col(j, ga)) += g_a * c - g_b * s;
      grad(i, L.position_col(j, gb)) += g_a * s + g_b * c;
      dyaw[i] += g_a * (-la * s + lb * c) + g_b * (-la * c - lb * s);
    }
  }

  double acc_a = 0, acc_b = 0, acc_yaw = 0;
  for (int i = f - 1; i >= 1; --i) {
    acc_a += droot_a[i];
    acc_b += droot_b[i];
    const double c = std::cos(root.yaw[i - 1]), s = std::sin(root.yaw[i - 1]);
    const double va = rel(i - 1, L.root_velocity), vb = rel(i - 1, L.root_velocity + 1);
    grad(i - 1, L.root_velocity) += (acc_a * c - acc_b * s) / fps;
    grad(i - 1, L.root_velocity + 1) += (acc_a * s + acc_b * c) / fps;
    dyaw[i - 1] += (acc_a * (-va * s + vb * c) + acc_b * (-va * c - vb * s)) / fps;
    acc_yaw += dyaw[i];
    grad(i - 1, L.root_yaw_rate) += acc_yaw / fps;
  }
  return grad;
}

Matrix detect_foot_contacts(const GlobalMotion& glob, const Skeleton& skel, double h_thresh, double v_thresh) {
  const int f = glob.frames();
  const int u = skel.up(), ga = skel.ground_a(), gb = skel.ground_b();
  Matrix labels = Matrix::Zero(f, 4);
  for (int k = 0; k < 4; ++k) {
    const int j = skel.feet()[k];
    for (int i = 0; i < f; ++i) {
      const Vector3 p = glob.at(i, j);
      double disp = 0.0;
      if (f > 1) {
        const Vector3 q = i + 1 < f ? glob.at(i + 1, j) : glob.at(i - 1, j);
        disp = std::hypot(q[ga] - p[ga], q[gb] - p[gb]);
      }
      labels(i, k) = (p[u] < h_thresh && disp < v_thresh) ? 1.0 : 0.0;
    }
  }
  return labels;
}

double facing_yaw(const GlobalMotion& glob, const Skeleton& skel, int frame, double fallback) {
  const auto& fj = skel.facing();
  const Vector3 across = (glob.at(frame, fj[1]) - glob.at(frame, fj[0])) + (glob.at(frame, fj[3]) - glob.at(frame, fj[2]));
  Vector3 up = Vector3::Zero();
  up[skel.up()] = 1.0;
  const Vector3 fwd = up.cross(across);
  const double fa = fwd[skel.ground_a()], fb = fwd[skel.ground_b()];
  if (std::hypot(fa, fb) < 1e-9) return fallback;
  return std::atan2(fa, fb);
}

RelativeMotion global_to_relative(const GlobalMotion& glob, const Skeleton& skel, ContactThresholds contacts) {
  const int f = glob.frames();
  const int J = skel.joints();
  if (f < 2) throw ValidationError("global_to_relative: need at least 2 frames (velocities undefined)");
  require(glob.joints() == J, "global_to_relative: motion has " + std::to_string(glob.joints()) +
                                  " joints, skeleton has " + std::to_string(J));
  require(glob.fps > 0.0, "global_to_relative: fps must be positive");
  require(glob.positions.allFinite(), "global_to_relative: non-finite positions");
  const RelativeLayout L(J);
  const int u = skel.up(), ga = skel.ground_a(), gb = skel.ground_b();
  const double fps = glob.fps;

  std::vector<double> yaw(f);
  for (int i = 0; i < f; ++i) yaw[i] = facing_yaw(glob, skel, i, i > 0 ? yaw[i - 1] : 0.0);

  RelativeMotion rel;
  rel.fps = fps;
  rel.data = Matrix::Zero(f, L.D);
  Matrix& R = rel.data;

  auto to_local = [&](int i, const Vector3& d) {
    Vector3 out;
    rotate_ground(-yaw[i], d[ga], d[gb], out[ga], out[gb]);
    out[u] = d[u];
    return out;
  };

  for (int i = 0; i < f; ++i) {
    const Vector3 root = glob.at(i, 0);
    R(i, L.root_height) = root[u];
    if (i + 1 < f) {
      const Vector3 d = glob.at(i + 1, 0) - root;
      double va = 0, vb = 0;
      rotate_ground(-yaw[i], d[ga], d[gb], va, vb);
      R(i, L.root_velocity) = va * fps;
      R(i, L.root_velocity + 1) = vb * fps;
      R(i, L.root_yaw_rate) = wrap_angle(yaw[i + 1] - yaw[i]) * fps;
    }
    std::vector<Vector3> local(J, Vector3::Zero());
    for (int j = 1; j < J; ++j) {
      local[j] = to_local(i, glob.at(i, j) - root);
      for (int a = 0; a < 3; ++a) R(i, L.position_col(j, a)) = local[j][a];
    }
    if (i + 1 < f) {
      for (int j = 0; j < J; ++j) {
        const Vector3 v = to_local(i, glob.at(i + 1, j) - glob.at(i, j)) * fps;
        for (int a = 0; a < 3; ++a) R(i, L.velocity_col(j, a)) = v[a];
      }
    }
    Vector3 up = Vector3::Zero();
    up[u] = 1.0;
    Vector3 fwd = Vector3::Zero();
    fwd[gb] = 1.0;
    for (int j = 1; j < J; ++j) {
      Vector3 d = local[j] - local[skel.parents()[j]];
      const double n = d.norm();
      d = n > 1e-12 ? Vector3(d / n) : up;
      Vector3 c2 = up - up.dot(d) * d;
      if (c2.norm() < 1e-6) c2 = fwd - fwd.dot(d) * d;
      c2.normalize();
      for (int a = 0; a < 3; ++a) {
        R(i, L.rotation_col(j, a)) = d[a];
        R(i, L.rotation_col(j, 3 + a)) = c2[a];
      }
    }
  }
  // No successor for the last frame: repeat the previous frame's rates.
  R.block(f - 1, 0, 1, 3) = R.block(f - 2, 0, 1, 3);
  R.block(f - 1, L.local_velocities, 1, 3 * J) = R.block(f - 2, L.local_velocities, 1, 3 * J);

  R.block(0, L.contacts, f, 4) = detect_foot_contacts(glob, skel, contacts.height, contacts.speed);
  return rel;
}

Vector3 GroundFrame::to_world(const Vector3& local, const Skeleton& skel) const {
  Vector3 out = local;
  double a = 0, b = 0;
  rotate_ground(yaw, local[skel.ground_a()], local[skel.ground_b()], a, b);
  out[skel.ground_a()] = origin_a + a;
  out[skel.ground_b()] = origin_b + b;
  return out;
}

Vector3 GroundFrame::to_local(const Vector3& world, const Skeleton& skel) const {
  Vector3 out = world;
  rotate_ground(-yaw, world[skel.ground_a()] - origin_a, world[skel.ground_b()] - origin_b, out[skel.ground_a()],
                out[skel.ground_b()]);
  return out;
}

GlobalMotion GroundFrame::to_world(const GlobalMotion& local, const Skeleton& skel) const {
  GlobalMotion out = local;
  for (int i = 0; i < local.frames(); ++i) {
    for (int j = 0; j < local.joints(); ++j) out.set(i, j, to_world(local.at(i, j), skel));
  }
  return out;
}

}  // namespace cmg
