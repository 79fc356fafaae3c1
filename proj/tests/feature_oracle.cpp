#include "feature_oracle.hpp"

#include <cmath>

namespace mmtest {

using micromotion::FeatureFrame;
using micromotion::Keypoint;
using micromotion::kNumKeypoints;
using micromotion::Pose;
using micromotion::Track;

namespace {

bool ok(const Keypoint& kp, double thr) { return kp.confidence >= thr; }

double wrap_rad(double a) {
  while (a <= -M_PI) a += 2.0 * M_PI;
  while (a > M_PI) a -= 2.0 * M_PI;
  return a;
}

}  // namespace

std::vector<FeatureFrame> oracle_track_features(const Track& track, double thr) {
  // Carry-forward imputation, written out longhand.
  std::vector<Pose> poses = track.poses;
  Keypoint carry[kNumKeypoints];
  bool have[kNumKeypoints] = {};
  for (Pose& pose : poses) {
    for (int k = 0; k < kNumKeypoints; ++k) {
      if (ok(pose.keypoints[k], thr)) {
        carry[k] = pose.keypoints[k];
        have[k] = true;
      } else if (have[k]) {
        pose.keypoints[k].x = carry[k].x;
        pose.keypoints[k].y = carry[k].y;
        pose.keypoints[k].confidence = thr;
      }
    }
  }

  const int pos_joints[8] = {3, 4, 6, 7, 9, 10, 12, 13};
  const int dist_pairs[4][2] = {{10, 13}, {9, 12}, {4, 7}, {3, 6}};
  const int segments[8][2] = {{2, 3}, {3, 4}, {5, 6}, {6, 7},
                              {8, 9}, {9, 10}, {11, 12}, {12, 13}};
  const int cross[4][2] = {{4, 6}, {7, 3}, {10, 12}, {13, 9}};

  std::vector<FeatureFrame> out;
  double prev_dist[12] = {};
  double prev_angle[16] = {};
  bool have_prev = false;

  for (const Pose& pose : poses) {
    // Bounding box over valid keypoints.
    int n_valid = 0;
    double x_min = 0, x_max = 0, y_min = 0, y_max = 0;
    for (int k = 0; k < kNumKeypoints; ++k) {
      if (!ok(pose.keypoints[k], thr)) continue;
      const double x = pose.keypoints[k].x;
      const double y = pose.keypoints[k].y;
      if (n_valid == 0) {
        x_min = x_max = x;
        y_min = y_max = y;
      } else {
        if (x < x_min) x_min = x;
        if (x > x_max) x_max = x;
        if (y < y_min) y_min = y;
        if (y > y_max) y_max = y;
      }
      ++n_valid;
    }
    const double height = y_max - y_min;
    if (n_valid < 2 || height < 1.0) continue;  // dropped frame

    FeatureFrame frame;
    frame.frame_index = pose.frame_index;

    // Position group.
    if (ok(pose.keypoints[1], thr)) {
      for (int i = 0; i < 8; ++i) {
        const Keypoint& kp = pose.keypoints[pos_joints[i]];
        if (ok(kp, thr)) {
          frame.position[2 * i] = (kp.x - pose.keypoints[1].x) / height;
          frame.position[2 * i + 1] = (kp.y - pose.keypoints[1].y) / height;
        } else {
          frame.group_valid[0] = false;
        }
      }
    } else {
      frame.group_valid[0] = false;
    }

    // Distance group (static half).
    double hip_w = std::sqrt(
        (pose.keypoints[8].x - pose.keypoints[11].x) * (pose.keypoints[8].x - pose.keypoints[11].x) +
        (pose.keypoints[8].y - pose.keypoints[11].y) * (pose.keypoints[8].y - pose.keypoints[11].y));
    if (hip_w < 2.0) hip_w = 0.25 * height;
    for (int i = 0; i < 4; ++i) {
      const Keypoint& a = pose.keypoints[dist_pairs[i][0]];
      const Keypoint& b = pose.keypoints[dist_pairs[i][1]];
      if (ok(a, thr) && ok(b, thr)) {
        const double dx = b.x - a.x;
        const double dy = b.y - a.y;
        frame.distance[3 * i] = std::sqrt(dx * dx + dy * dy) / hip_w;
        frame.distance[3 * i + 1] = std::fabs(dx) / height;
        frame.distance[3 * i + 2] = std::fabs(dy) / height;
      } else {
        frame.group_valid[1] = false;
      }
    }

    // Angle group.
    bool angles_ok = true;
    double seg_angle[8];
    for (int i = 0; i < 8; ++i) {
      const Keypoint& a = pose.keypoints[segments[i][0]];
      const Keypoint& b = pose.keypoints[segments[i][1]];
      const double dx = b.x - a.x;
      const double dy = b.y - a.y;
      if ((dx == 0.0 && dy == 0.0) || !ok(a, thr) || !ok(b, thr)) {
        seg_angle[i] = 0.0;
        angles_ok = false;
      } else {
        seg_angle[i] = std::atan2(dy, dx) / M_PI;
      }
      frame.angle_static[i] = seg_angle[i];
    }
    frame.angle_static[8] = wrap_rad((seg_angle[2] - seg_angle[0]) * M_PI) / M_PI;
    frame.angle_static[9] = wrap_rad((seg_angle[3] - seg_angle[1]) * M_PI) / M_PI;
    frame.angle_static[10] = wrap_rad((seg_angle[6] - seg_angle[4]) * M_PI) / M_PI;
    frame.angle_static[11] = wrap_rad((seg_angle[7] - seg_angle[5]) * M_PI) / M_PI;
    for (int i = 0; i < 4; ++i) {
      const Keypoint& a = pose.keypoints[cross[i][0]];
      const Keypoint& b = pose.keypoints[cross[i][1]];
      const double dx = b.x - a.x;
      const double dy = b.y - a.y;
      if ((dx == 0.0 && dy == 0.0) || !ok(a, thr) || !ok(b, thr)) {
        frame.angle_static[12 + i] = 0.0;
        angles_ok = false;
      } else {
        frame.angle_static[12 + i] = std::atan2(dy, dx) / M_PI;
      }
    }
    frame.group_valid[2] = angles_ok;

    // Dynamic halves: first differences against the previous retained frame.
    if (have_prev) {
      for (int i = 0; i < 12; ++i) {
        frame.distance[12 + i] = frame.distance[i] - prev_dist[i];
      }
      for (int i = 0; i < 16; ++i) {
        frame.angle_dynamic[i] =
            wrap_rad((frame.angle_static[i] - prev_angle[i]) * M_PI) / M_PI;
      }
      frame.group_valid[3] = frame.group_valid[2];
    }

    for (int i = 0; i < 12; ++i) prev_dist[i] = frame.distance[i];
    for (int i = 0; i < 16; ++i) prev_angle[i] = frame.angle_static[i];
    have_prev = true;
    out.push_back(frame);
  }
  return out;
}

}  // namespace mmtest
