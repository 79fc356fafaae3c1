#include "micromotion/skeleton.hpp"

#include <algorithm>
#include <utility>

namespace micromotion {

const char* label_name(MotionLabel label) {
  switch (label) {
    case MotionLabel::Walking:
      return "walking";
    case MotionLabel::Standing:
      return "standing";
    default:
      return "unknown";
  }
}

MotionLabel label_from_name(const std::string& name) {
  if (name == "walking") return MotionLabel::Walking;
  if (name == "standing") return MotionLabel::Standing;
  if (name == "unknown") return MotionLabel::Unknown;
  throw ParseError("unrecognized motion label: " + name);
}

BBox bbox_from_pose(const Pose& pose, double conf_threshold) {
  BBox box;
  int n_valid = 0;
  for (const Keypoint& kp : pose.keypoints) {
    if (!kp.valid(conf_threshold)) continue;
    if (n_valid == 0) {
      box = BBox{kp.x, kp.y, kp.x, kp.y};
    } else {
      box.x_min = std::min(box.x_min, kp.x);
      box.y_min = std::min(box.y_min, kp.y);
      box.x_max = std::max(box.x_max, kp.x);
      box.y_max = std::max(box.y_max, kp.y);
    }
    ++n_valid;
  }
  if (n_valid < 2) {
    throw DegeneratePose("bbox needs at least 2 valid keypoints, got " +
                         std::to_string(n_valid));
  }
  if (box.height() < kMinBBoxHeight) {
    throw DegeneratePose("bbox height below minimum");
  }
  return box;
}

namespace {

// Left/right joint index pairs swapped by a horizontal mirror.
constexpr std::pair<int, int> kMirrorPairs[] = {
    {kShoulderR, kShoulderL}, {kElbowR, kElbowL}, {kWristR, kWristL},
    {kHipR, kHipL},           {kKneeR, kKneeL},   {kAnkleR, kAnkleL},
    {kEyeR, kEyeL},           {kEarR, kEarL},
};

}  // namespace

Pose mirror_pose(const Pose& pose, double axis_x) {
  Pose out = pose;
  for (Keypoint& kp : out.keypoints) {
    kp.x = 2.0 * axis_x - kp.x;
  }
  for (const auto& [r, l] : kMirrorPairs) {
    std::swap(out.keypoints[r], out.keypoints[l]);
  }
  return out;
}

Track mirror_track(const Track& track, double axis_x) {
  Track out = track;
  for (Pose& pose : out.poses) {
    pose = mirror_pose(pose, axis_x);
  }
  return out;
}

Track impute_track(const Track& track, double conf_threshold) {
  Track out = track;
  std::array<Keypoint, kNumKeypoints> carry{};
  std::array<bool, kNumKeypoints> have{};
  for (Pose& pose : out.poses) {
    for (int k = 0; k < kNumKeypoints; ++k) {
      Keypoint& kp = pose.keypoints[k];
      if (kp.valid(conf_threshold)) {
        carry[k] = kp;
        have[k] = true;
      } else if (have[k]) {
        kp.x = carry[k].x;
        kp.y = carry[k].y;
        kp.confidence = conf_threshold;
      }
      // else: invalid since track start, left as-is
    }
  }
  return out;
}

}  // namespace micromotion
