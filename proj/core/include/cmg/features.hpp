#pragma once

#include <vector>

#include "cmg/metrics.hpp"

namespace cmg {

constexpr int kMotionFeatureDim = 64;
constexpr const char* kMotionFeatureId = "handcrafted_kinematics_v1";

/// Fixed 64-d kinematic summary of a motion (speeds, heights, root path, foot contacts, extents),
/// computed after moving frame 0 into the canonical ground frame. These features are a deterministic
/// stand-in for a learned motion encoder, so FID and R-precision values on them are only comparable
/// with other values from the same extractor.
RowVector motion_features(const GlobalMotion& glob, const Skeleton& skel);
FeatureSet motion_feature_set(const std::vector<GlobalMotion>& motions, const Skeleton& skel);

}  // namespace cmg
