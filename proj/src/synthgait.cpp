#include "micromotion/synthgait.hpp"

#include <algorithm>
#include <cmath>

namespace micromotion {

namespace {

// Rest-pose joint offsets from the neck, in units of body_scale. Right-side
// joints sit at negative x. y grows downward.
struct JointOffset {
  double x, y;
};

constexpr JointOffset kRestPose[kNumKeypoints] = {
    {0.00, -0.20},   // nose
    {0.00, 0.00},    // neck
    {-0.22, 0.03},   // r shoulder
    {-0.25, 0.40},   // r elbow
    {-0.27, 0.74},   // r wrist
    {0.22, 0.03},    // l shoulder
    {0.25, 0.40},    // l elbow
    {0.27, 0.74},    // l wrist
    // Knees and ankles rest aligned in x, as seen from the side: the ankle
    // gap is then a pure rectified sine peaking once per step.
    {-0.13, 1.00},   // r hip
    {0.00, 1.46},    // r knee
    {0.00, 1.92},    // r ankle
    {0.13, 1.00},    // l hip
    {0.00, 1.46},    // l knee
    {0.00, 1.92},    // l ankle
    {-0.04, -0.25},  // r eye
    {0.04, -0.25},   // l eye
    {-0.09, -0.22},  // r ear
    {0.09, -0.22},   // l ear
};

constexpr double kLegRatio = 0.92;  // hip-to-ankle length over body_scale

void validate(const GaitConfig& config) {
  if (config.fps <= 0.0) throw ConfigError("fps must be positive");
  if (config.swing_amplitude < 0.0 || config.arm_amplitude < 0.0 ||
      config.jitter_sigma < 0.0) {
    throw ConfigError("amplitudes and jitter must be non-negative");
  }
  if (config.body_scale <= 0.0) throw ConfigError("body_scale must be positive");
  for (const GaitSegment& seg : config.schedule) {
    if (seg.duration < 1) throw ConfigError("schedule durations must be >= 1");
    if (seg.state == MotionLabel::Unknown) {
      throw ConfigError("schedule states must be walking or standing");
    }
  }
}

}  // namespace

Track generate_track(const GaitConfig& config, uint64_t seed,
                     const std::string& track_id) {
  validate(config);
  Rng rng(seed);
  const double phase0 = rng.uniform(0.0, 2.0 * M_PI);

  Track track;
  track.track_id = track_id;
  track.fps = config.fps;

  const double leg = kLegRatio * config.body_scale;
  const double swing = config.swing_amplitude * leg;
  const double arm_swing = config.arm_amplitude * leg;
  // One step per 1/cadence seconds: the ankle gap |x_l - x_r| peaks once per
  // step, so the sine itself runs at half that rate.
  const double phase_per_frame = M_PI * config.cadence / config.fps;

  int frame = 0;
  for (const GaitSegment& seg : config.schedule) {
    for (int t = 0; t < seg.duration; ++t, ++frame) {
      double envelope = 0.0;
      if (seg.state == MotionLabel::Walking) {
        const double up = (t + 1) / 3.0;
        const double down = (seg.duration - t) / 3.0;
        envelope = std::min({1.0, up, down});
      }
      const double phase = phase0 + phase_per_frame * frame;
      const double swing_x = envelope * swing * std::sin(phase);
      const double arm_x = envelope * arm_swing * std::sin(phase);

      Pose pose;
      pose.frame_index = frame;
      for (int k = 0; k < kNumKeypoints; ++k) {
        double x = config.origin_x + kRestPose[k].x * config.body_scale;
        double y = config.origin_y + kRestPose[k].y * config.body_scale;
        switch (k) {
          case kAnkleR: x += swing_x; break;
          case kAnkleL: x -= swing_x; break;
          case kKneeR: x += 0.5 * swing_x; break;
          case kKneeL: x -= 0.5 * swing_x; break;
          case kWristR: x -= arm_x; break;
          case kWristL: x += arm_x; break;
          case kElbowR: x -= 0.5 * arm_x; break;
          case kElbowL: x += 0.5 * arm_x; break;
          default: break;
        }
        if (config.jitter_sigma > 0.0) {
          x += rng.normal(0.0, config.jitter_sigma);
          y += rng.normal(0.0, config.jitter_sigma);
        }
        pose.keypoints[k] = Keypoint{x, y, 1.0};
      }
      track.poses.push_back(pose);
      track.labels.push_back(seg.state);
    }
  }
  return track;
}

Dataset generate_dataset(int n_tracks, double walking_mix, uint64_t seed,
                         const GaitConfig& base) {
  if (n_tracks < 1) throw ConfigError("n_tracks must be >= 1");
  if (walking_mix <= 0.0 || walking_mix >= 1.0) {
    throw ConfigError("walking_mix must lie strictly between 0 and 1");
  }
  Rng rng(seed);
  std::vector<Track> tracks;
  tracks.reserve(n_tracks);

  for (int i = 0; i < n_tracks; ++i) {
    GaitConfig cfg = base;
    cfg.cadence = std::max(0.4, base.cadence + rng.uniform(-0.6, 0.6));
    cfg.swing_amplitude = std::max(0.05, base.swing_amplitude + rng.uniform(-0.10, 0.10));
    cfg.arm_amplitude = std::max(0.0, base.arm_amplitude + rng.uniform(-0.10, 0.10));
    cfg.body_scale = std::max(40.0, base.body_scale + rng.uniform(-70.0, 70.0));
    cfg.jitter_sigma = base.jitter_sigma * rng.uniform(0.5, 2.0);
    cfg.origin_x = rng.uniform(300.0, 1600.0);
    cfg.origin_y = rng.uniform(80.0, 400.0);

    // Alternating schedule; expected durations carry the class mix.
    cfg.schedule.clear();
    const int target = 120 + static_cast<int>(rng.uniform_int(161));  // 120..280
    MotionLabel state = rng.bernoulli(walking_mix) ? MotionLabel::Walking
                                                   : MotionLabel::Standing;
    int total = 0;
    while (total < target) {
      const double scale =
          state == MotionLabel::Walking ? 2.0 * walking_mix : 2.0 * (1.0 - walking_mix);
      const int duration =
          std::max(6, static_cast<int>(std::lround(scale * rng.uniform(40.0, 120.0))));
      cfg.schedule.push_back(GaitSegment{state, duration});
      total += duration;
      state = state == MotionLabel::Walking ? MotionLabel::Standing : MotionLabel::Walking;
    }

    char id[32];
    std::snprintf(id, sizeof(id), "synth_%04d", i);
    tracks.push_back(generate_track(cfg, rng.raw(), id));
  }
  return make_dataset(std::move(tracks));
}

}  // namespace micromotion
