#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cmg/training.hpp"

namespace cmg {

/// Descriptions of the in-place activities produced by synthetic_motion.
const std::vector<std::string>& synthetic_activity_texts();

/// In-place activity with both feet planted (ankles and toes fixed, knees solved by two-bone IK).
/// Upper-body joints are driven through named joints of the default skeleton when present.
/// `amplitude` scales the movement, `cycles` is the number of repetitions over the clip.
GlobalMotion synthetic_motion(const Skeleton& skel, int activity, int frames, double fps, double amplitude = 1.0,
                              double cycles = 1.0, double phase = 0.0);

/// `count` samples cycling through the activities with seeded amplitude/tempo variation. Each sample's
/// control marks every joint on every frame as available, with targets in the canonical frame.
std::vector<TrainSample> synthetic_dataset(const Skeleton& skel, int count, int frames, double fps,
                                           std::uint64_t seed);

}  // namespace cmg
