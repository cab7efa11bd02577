#pragma once

#include <array>
#include <string>
#include <vector>

#include "cmg/types.hpp"

namespace cmg {

/// Kinematic tree with rest-pose offsets. Joint 0 is the pelvis/root.
class Skeleton {
 public:
  Skeleton(std::vector<std::string> names, std::vector<int> parents, std::vector<Vector3> offsets,
           std::array<int, 4> feet, std::array<int, 4> facing, char up_axis = 'y');

  /// 22-joint HumanML3D-style topology, Y-up, facing +Z, left side on +X.
  static Skeleton humanml22();
  /// Four-joint chain (pelvis, spine, left foot, right foot) used by small test instances.
  static Skeleton toy4();

  static Skeleton from_json(const std::string& text);
  static Skeleton load(const std::string& path);
  std::string to_json() const;

  int joints() const { return static_cast<int>(parents_.size()); }
  const std::vector<int>& parents() const { return parents_; }
  const std::vector<Vector3>& offsets() const { return offsets_; }
  const std::vector<std::string>& names() const { return names_; }
  int index_of(const std::string& name) const;

  /// Foot joints ordered {left ankle, left toe, right ankle, right toe}.
  const std::array<int, 4>& feet() const { return feet_; }
  /// The two toe joints supervised by the foot-skating loss.
  std::array<int, 2> loss_feet() const { return {feet_[1], feet_[3]}; }
  /// {left hip, right hip, left shoulder, right shoulder}; used to recover heading from positions.
  const std::array<int, 4>& facing() const { return facing_; }

  /// Axis index of the vertical axis (1 for y, 2 for z); the other two span the ground plane.
  int up() const { return up_; }
  int ground_a() const { return 0; }
  int ground_b() const { return up_ == 1 ? 2 : 1; }
  char up_axis() const { return up_ == 1 ? 'y' : 'z'; }

  /// Rest-pose joint positions with the lowest joint `floor_clearance` above the ground.
  std::vector<Vector3> rest_positions(double floor_clearance = 0.02) const;
  double rest_pelvis_height(double floor_clearance = 0.02) const;

 private:
  std::vector<std::string> names_;
  std::vector<int> parents_;
  std::vector<Vector3> offsets_;
  std::array<int, 4> feet_;
  std::array<int, 4> facing_;
  int up_ = 1;
};

}  // namespace cmg
