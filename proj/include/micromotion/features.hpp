#pragma once

#include <array>
#include <vector>

#include "micromotion/skeleton.hpp"

namespace micromotion {

inline constexpr int kPositionDim = 16;
inline constexpr int kDistanceStaticDim = 12;
inline constexpr int kDistanceDim = 24;  // 12 static followed by 12 differentials
inline constexpr int kAngleDim = 16;

// Joints whose neck-relative coordinates form the position group, ascending.
inline constexpr std::array<int, 8> kPositionJoints = {
    kElbowR, kWristR, kElbowL, kWristL, kKneeR, kAnkleR, kKneeL, kAnkleL};

// Keypoint pairs of the distance group: ankles, knees, wrists, elbows.
inline constexpr std::array<std::pair<int, int>, 4> kDistancePairs = {{
    {kAnkleR, kAnkleL},
    {kKneeR, kKneeL},
    {kWristR, kWristL},
    {kElbowR, kElbowL},
}};

// Limb segments, measured from the first keypoint toward the second.
inline constexpr std::array<std::pair<int, int>, 8> kLimbSegments = {{
    {kShoulderR, kElbowR},
    {kElbowR, kWristR},
    {kShoulderL, kElbowL},
    {kElbowL, kWristL},
    {kHipR, kKneeR},
    {kKneeR, kAnkleR},
    {kHipL, kKneeL},
    {kKneeL, kAnkleL},
}};

// Cross-body directions: wrist to opposite elbow, ankle to opposite knee.
inline constexpr std::array<std::pair<int, int>, 4> kCrossSegments = {{
    {kWristR, kElbowL},
    {kWristL, kElbowR},
    {kAnkleR, kKneeL},
    {kAnkleL, kKneeR},
}};

/// One timestep of model input. Angles are stored as radians / pi so that
/// every group lives in a comparable numeric range.
struct FeatureFrame {
  std::array<double, kPositionDim> position{};
  std::array<double, kDistanceDim> distance{};
  std::array<double, kAngleDim> angle_static{};
  std::array<double, kAngleDim> angle_dynamic{};
  // position, distance, angle_static, angle_dynamic
  std::array<bool, 4> group_valid{true, true, true, true};
  int frame_index = 0;
};

/// Neck-relative coordinates of the eight limb joints, normalized by the
/// bounding-box height: (x - x_neck)/H, (y - y_neck)/H per joint.
std::array<double, kPositionDim> position_features(const Pose& pose, const BBox& bbox);

/// Per pair in kDistancePairs: Euclidean distance over hip width, then the
/// absolute axis components over the bbox height. Hip widths below
/// kMinHipWidth fall back to 0.25*H as the normalizer.
std::array<double, kDistanceStaticDim> distance_features_static(const Pose& pose,
                                                                const BBox& bbox);

/// 16 pi-normalized angles: 8 limb-segment angles against the horizontal
/// axis, 4 wrapped left-minus-right segment differences (upper arms,
/// forearms, thighs, shanks), 4 cross-body directions. A segment with
/// coincident endpoints yields 0 and clears *valid.
std::array<double, kAngleDim> angle_features_static(const Pose& pose,
                                                    bool* valid = nullptr);

/// cur - prev mapped into (-pi, pi].
double wrap_angle_diff(double prev, double cur);

/// Imputes the track, then produces one FeatureFrame per non-degenerate
/// frame. Dynamic entries are first differences of the static distance and
/// angle values against the previous retained frame (zeros at the first).
/// Degenerate frames are dropped; differencing bridges the gap.
std::vector<FeatureFrame> extract_track_features(const Track& track,
                                                 double conf_threshold);

/// Single-frame feature computation against explicit previous statics; the
/// streaming path shares this with extract_track_features. prev_* may be
/// null for a first frame (dynamic entries become zero).
FeatureFrame compute_feature_frame(const Pose& pose, double conf_threshold,
                                   const std::array<double, kDistanceStaticDim>* prev_distance,
                                   const std::array<double, kAngleDim>* prev_angle);

}  // namespace micromotion
