#pragma once

#include <array>
#include <string>
#include <vector>

#include "micromotion/common.hpp"

namespace micromotion {

struct Keypoint {
  double x = 0.0;  // pixels, rightward
  double y = 0.0;  // pixels, downward (image coordinates)
  double confidence = 0.0;

  bool valid(double conf_threshold) const { return confidence >= conf_threshold; }
};

// 18-joint layout with an explicit neck point. The first 14 indices carry
// the torso and limbs; 14-17 are eyes and ears.
enum KeypointIndex : int {
  kNose = 0,
  kNeck = 1,
  kShoulderR = 2,
  kElbowR = 3,
  kWristR = 4,
  kShoulderL = 5,
  kElbowL = 6,
  kWristL = 7,
  kHipR = 8,
  kKneeR = 9,
  kAnkleR = 10,
  kHipL = 11,
  kKneeL = 12,
  kAnkleL = 13,
  kEyeR = 14,
  kEyeL = 15,
  kEarR = 16,
  kEarL = 17,
};

inline constexpr int kNumKeypoints = 18;

struct Pose {
  std::array<Keypoint, kNumKeypoints> keypoints{};
  int frame_index = 0;
};

enum class MotionLabel : int8_t {
  Walking = 0,
  Standing = 1,
  Unknown = -1,
};

const char* label_name(MotionLabel label);
MotionLabel label_from_name(const std::string& name);

struct Track {
  std::string track_id;
  std::vector<Pose> poses;           // frame_index strictly increasing
  std::vector<MotionLabel> labels;   // empty, or one per pose
  double fps = 30.0;
};

struct BBox {
  double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double center_x() const { return 0.5 * (x_min + x_max); }
};

/// Axis-aligned extent of all keypoints with confidence >= conf_threshold.
/// Throws DegeneratePose when fewer than two keypoints are valid or when the
/// resulting height is below kMinBBoxHeight.
BBox bbox_from_pose(const Pose& pose, double conf_threshold);

/// Reflects every keypoint about the vertical line x = axis_x and swaps the
/// left/right joint indices. y and confidence are untouched. Applying the
/// mirror twice restores the input; the round trip is bit-exact whenever
/// 2*axis_x - x incurs no rounding (always true for dyadic pixel grids).
Pose mirror_pose(const Pose& pose, double axis_x);

/// mirror_pose applied to every frame of a track.
Track mirror_track(const Track& track, double axis_x);

/// Replaces each invalid keypoint with the most recent valid observation of
/// the same index (confidence set to conf_threshold). Keypoints invalid since
/// the start of the track are left untouched, so they stay flagged invalid.
Track impute_track(const Track& track, double conf_threshold);

}  // namespace micromotion
