#pragma once

#include <cmath>
#include <vector>

#include "cmg/skeleton.hpp"
#include "cmg/types.hpp"

namespace cmg {

/// Column layout of the per-frame relative vector:
///   [root yaw rate (1), root ground velocity (2), root height (1),
///    local joint positions 3(J-1), local joint velocities 3J, bone frames 6(J-1), foot contacts (4)].
/// Rates and velocities are per second; the local frame is the root's ground projection and heading.
struct RelativeLayout {
  explicit RelativeLayout(int joints);

  static constexpr int kJointChannels = 12;

  int J;
  int D;
  int root_yaw_rate = 0;
  int root_velocity = 1;
  int root_height = 3;
  int local_positions = 4;
  int local_velocities;
  int rotations;
  int contacts;

  int position_col(int joint, int axis) const { return local_positions + 3 * (joint - 1) + axis; }
  int velocity_col(int joint, int axis) const { return local_velocities + 3 * joint + axis; }
  int rotation_col(int joint, int k) const { return rotations + 6 * (joint - 1) + k; }

  /// Maps the per-joint channel block (J x 12, row-major) onto relative columns; -1 marks padding.
  /// Root block: yaw rate, ground velocity, height, root velocity, contacts, pad.
  /// Joint block: local position, local velocity, bone frame.
  std::vector<int> joint_channel_map() const;
};

int relative_dim(int joints);

struct RelativeMotion {
  Matrix data;  // f x D
  double fps = 20.0;
  int frames() const { return static_cast<int>(data.rows()); }
};

struct GlobalMotion {
  Matrix positions;  // f x 3J, joint j at columns [3j, 3j+3)
  double fps = 20.0;

  GlobalMotion() = default;
  GlobalMotion(int frames, int joints, double fps_) : positions(Matrix::Zero(frames, 3 * joints)), fps(fps_) {}

  int frames() const { return static_cast<int>(positions.rows()); }
  int joints() const { return static_cast<int>(positions.cols() / 3); }
  Vector3 at(int frame, int joint) const {
    return positions.block<1, 3>(frame, 3 * joint).transpose();
  }
  void set(int frame, int joint, const Vector3& p) { positions.block<1, 3>(frame, 3 * joint) = p.transpose(); }
};

/// Per-agent spatial targets in the agent's canonical frame plus the binary control mask.
struct SpatialControl {
  Matrix targets;  // f x 3J
  Matrix mask;     // f x J, entries in {0, 1}

  static SpatialControl empty(int frames, int joints);
  int frames() const { return static_cast<int>(mask.rows()); }
  int joints() const { return static_cast<int>(mask.cols()); }
  bool any() const { return count() > 0; }
  int count() const;
  void set(int frame, int joint, const Vector3& p);
  Vector3 target(int frame, int joint) const { return targets.block<1, 3>(frame, 3 * joint).transpose(); }
  /// Throws ValidationError unless mask is binary and controlled targets are finite.
  void validate() const;
};

/// Mean Euclidean distance between controlled targets and `positions` (f x 3J) over entries with
/// mask 1; 0 for an empty mask. `grad` (optional) receives d/dpositions, with a zero subgradient
/// where a target and its joint coincide.
double masked_mean_distance(const Matrix& positions, const SpatialControl& control, Matrix* grad = nullptr);

/// Rotation about the up axis acting on ground-plane coordinates (a, b); maps local forward
/// (0, 1) to (sin yaw, cos yaw).
inline void rotate_ground(double yaw, double a, double b, double& out_a, double& out_b) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  out_a = a * c + b * s;
  out_b = -a * s + b * c;
}

double wrap_angle(double a);

/// Integrates root yaw rate and ground velocity (frame 0 root at the ground origin, heading 0)
/// and places local joint positions in the accumulated root frame. Returns f x 3J.
Matrix relative_to_global_positions(const Matrix& rel, double fps, const Skeleton& skel);
GlobalMotion relative_to_global(const RelativeMotion& rel, const Skeleton& skel);

/// Vector-Jacobian product of relative_to_global_positions: maps dL/dpositions (f x 3J) to
/// dL/drel (f x D). Channels that do not enter the integration receive zero.
Matrix relative_to_global_vjp(const Matrix& rel, double fps, const Skeleton& skel, const Matrix& grad_positions);

struct ContactThresholds {
  double height = 0.10;  // m
  double speed = 0.01;   // m/frame, horizontal
};

/// f x 4 labels in skeleton foot order: 1 iff foot height < h AND horizontal displacement to the
/// next frame (previous frame for the last one) < v.
Matrix detect_foot_contacts(const GlobalMotion& glob, const Skeleton& skel, double h_thresh, double v_thresh);

/// Heading (yaw) recovered from hip and shoulder joints; `fallback` when the across vector vanishes.
double facing_yaw(const GlobalMotion& glob, const Skeleton& skel, int frame, double fallback);

/// Requires f >= 2. Bone frames are rebuilt from joint positions (first two columns of a frame
/// aligned with the bone direction).
RelativeMotion global_to_relative(const GlobalMotion& glob, const Skeleton& skel, ContactThresholds contacts = {});

/// Rigid ground-plane placement of an agent's canonical frame in the world.
struct GroundFrame {
  double origin_a = 0.0;
  double origin_b = 0.0;
  double yaw = 0.0;

  Vector3 to_world(const Vector3& local, const Skeleton& skel) const;
  Vector3 to_local(const Vector3& world, const Skeleton& skel) const;
  GlobalMotion to_world(const GlobalMotion& local, const Skeleton& skel) const;
};

}  // namespace cmg
