#include "micromotion/features.hpp"

#include <cmath>

namespace micromotion {

namespace {

bool joints_valid(const Pose& pose, double conf, int a, int b) {
  return pose.keypoints[a].valid(conf) && pose.keypoints[b].valid(conf);
}

// Angle of the segment a->b against the horizontal axis, image coordinates
// (y down), pi-normalized. Coincident endpoints give 0 and clear *ok.
double segment_angle(const Pose& pose, int a, int b, bool* ok) {
  const Keypoint& from = pose.keypoints[a];
  const Keypoint& to = pose.keypoints[b];
  const double dx = to.x - from.x;
  const double dy = to.y - from.y;
  if (dx == 0.0 && dy == 0.0) {
    *ok = false;
    return 0.0;
  }
  return std::atan2(dy, dx) / M_PI;
}

}  // namespace

std::array<double, kPositionDim> position_features(const Pose& pose, const BBox& bbox) {
  std::array<double, kPositionDim> out{};
  const double h = bbox.height();
  if (h < kMinBBoxHeight) throw DegeneratePose("bbox height below minimum");
  const Keypoint& neck = pose.keypoints[kNeck];
  for (size_t i = 0; i < kPositionJoints.size(); ++i) {
    const Keypoint& kp = pose.keypoints[kPositionJoints[i]];
    out[2 * i] = (kp.x - neck.x) / h;
    out[2 * i + 1] = (kp.y - neck.y) / h;
  }
  return out;
}

std::array<double, kDistanceStaticDim> distance_features_static(const Pose& pose,
                                                                const BBox& bbox) {
  std::array<double, kDistanceStaticDim> out{};
  const double h = bbox.height();
  const Keypoint& hip_r = pose.keypoints[kHipR];
  const Keypoint& hip_l = pose.keypoints[kHipL];
  double hip_width = std::hypot(hip_l.x - hip_r.x, hip_l.y - hip_r.y);
  if (hip_width < kMinHipWidth) hip_width = 0.25 * h;
  for (size_t i = 0; i < kDistancePairs.size(); ++i) {
    const auto& [a, b] = kDistancePairs[i];
    const double dx = pose.keypoints[b].x - pose.keypoints[a].x;
    const double dy = pose.keypoints[b].y - pose.keypoints[a].y;
    out[3 * i] = std::hypot(dx, dy) / hip_width;
    out[3 * i + 1] = std::abs(dx) / h;
    out[3 * i + 2] = std::abs(dy) / h;
  }
  return out;
}

namespace {

// Shared by the public op (which assumes valid endpoints) and the frame
// extractor (which masks low-confidence joints). A segment whose endpoints
// coincide or fail the confidence gate contributes 0 and clears ok.
std::array<double, kAngleDim> angle_features_masked(const Pose& pose,
                                                    double conf_threshold, bool* ok_out) {
  std::array<double, kAngleDim> out{};
  bool ok = true;

  std::array<double, 8> seg{};
  for (size_t i = 0; i < kLimbSegments.size(); ++i) {
    const auto& [a, b] = kLimbSegments[i];
    if (!joints_valid(pose, conf_threshold, a, b)) {
      seg[i] = 0.0;
      ok = false;
    } else {
      seg[i] = segment_angle(pose, a, b, &ok);
    }
    out[i] = seg[i];
  }

  // Left minus right, wrapped: upper arms, forearms, thighs, shanks.
  // kLimbSegments orders right upper arm, right forearm, left upper arm,
  // left forearm, then the same for the legs.
  out[8] = wrap_unit(seg[2] - seg[0]);
  out[9] = wrap_unit(seg[3] - seg[1]);
  out[10] = wrap_unit(seg[6] - seg[4]);
  out[11] = wrap_unit(seg[7] - seg[5]);

  for (size_t i = 0; i < kCrossSegments.size(); ++i) {
    const auto& [a, b] = kCrossSegments[i];
    if (!joints_valid(pose, conf_threshold, a, b)) {
      out[12 + i] = 0.0;
      ok = false;
    } else {
      out[12 + i] = segment_angle(pose, a, b, &ok);
    }
  }

  if (ok_out) *ok_out = ok;
  return out;
}

}  // namespace

std::array<double, kAngleDim> angle_features_static(const Pose& pose, bool* valid) {
  return angle_features_masked(pose, -1.0, valid);
}

double wrap_angle_diff(double prev, double cur) { return wrap_to_pi(cur - prev); }

FeatureFrame compute_feature_frame(const Pose& pose, double conf_threshold,
                                   const std::array<double, kDistanceStaticDim>* prev_distance,
                                   const std::array<double, kAngleDim>* prev_angle) {
  FeatureFrame frame;
  frame.frame_index = pose.frame_index;
  const BBox bbox = bbox_from_pose(pose, conf_threshold);

  if (pose.keypoints[kNeck].valid(conf_threshold)) {
    frame.position = position_features(pose, bbox);
    for (size_t i = 0; i < kPositionJoints.size(); ++i) {
      if (!pose.keypoints[kPositionJoints[i]].valid(conf_threshold)) {
        frame.position[2 * i] = 0.0;
        frame.position[2 * i + 1] = 0.0;
        frame.group_valid[0] = false;
      }
    }
  } else {
    frame.group_valid[0] = false;
  }

  const auto dist = distance_features_static(pose, bbox);
  for (size_t i = 0; i < kDistancePairs.size(); ++i) {
    if (joints_valid(pose, conf_threshold, kDistancePairs[i].first, kDistancePairs[i].second)) {
      frame.distance[3 * i] = dist[3 * i];
      frame.distance[3 * i + 1] = dist[3 * i + 1];
      frame.distance[3 * i + 2] = dist[3 * i + 2];
    } else {
      frame.group_valid[1] = false;
    }
  }

  bool angles_ok = true;
  frame.angle_static = angle_features_masked(pose, conf_threshold, &angles_ok);
  frame.group_valid[2] = angles_ok;

  // First differences against the previous retained frame.
  if (prev_distance) {
    for (int i = 0; i < kDistanceStaticDim; ++i) {
      frame.distance[kDistanceStaticDim + i] = frame.distance[i] - (*prev_distance)[i];
    }
  }
  if (prev_angle) {
    for (int i = 0; i < kAngleDim; ++i) {
      frame.angle_dynamic[i] = wrap_unit(frame.angle_static[i] - (*prev_angle)[i]);
    }
    frame.group_valid[3] = frame.group_valid[2];
  }
  return frame;
}

std::vector<FeatureFrame> extract_track_features(const Track& track,
                                                 double conf_threshold) {
  const Track imputed = impute_track(track, conf_threshold);
  std::vector<FeatureFrame> out;
  out.reserve(imputed.poses.size());

  std::array<double, kDistanceStaticDim> prev_distance{};
  std::array<double, kAngleDim> prev_angle{};
  bool have_prev = false;

  for (const Pose& pose : imputed.poses) {
    FeatureFrame frame;
    try {
      frame = compute_feature_frame(pose, conf_threshold,
                                    have_prev ? &prev_distance : nullptr,
                                    have_prev ? &prev_angle : nullptr);
    } catch (const DegeneratePose&) {
      continue;  // dropped; the next retained frame differences across the gap
    }
    for (int i = 0; i < kDistanceStaticDim; ++i) prev_distance[i] = frame.distance[i];
    prev_angle = frame.angle_static;
    have_prev = true;
    out.push_back(frame);
  }
  return out;
}

}  // namespace micromotion
