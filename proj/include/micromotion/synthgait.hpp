#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "micromotion/data_io.hpp"
#include "micromotion/skeleton.hpp"

namespace micromotion {

struct GaitSegment {
  MotionLabel state = MotionLabel::Walking;
  int duration = 1;  // frames
};

/// Kinematic generator settings. body_scale is the hip-to-neck length in
/// pixels; limb proportions are fixed anthropometric ratios of it.
struct GaitConfig {
  double fps = 30.0;
  double cadence = 1.8;          // steps per second
  double swing_amplitude = 0.35; // fraction of leg length
  double arm_amplitude = 0.2;    // fraction of leg length
  double jitter_sigma = 1.0;     // pixels, applied to every joint every frame
  double body_scale = 190.0;     // pixels
  double origin_x = 960.0;       // neck position in the image
  double origin_y = 250.0;
  std::vector<GaitSegment> schedule;
};

/// Deterministic labeled track. Walking frames swing the ankles
/// sinusoidally in x (antiphase left/right, one step per 1/cadence
/// seconds), knees at half amplitude and wrists antiphase to the
/// ipsilateral ankle; the swing envelope ramps over the first and last 3
/// frames of each walking segment. Standing frames hold the rest pose.
/// Gaussian jitter rides on every joint in both states.
Track generate_track(const GaitConfig& config, uint64_t seed,
                     const std::string& track_id = "synth");

/// n_tracks tracks with parameters randomized around `base`:
/// cadence +-0.6, swing +-0.10, arm +-0.10, body_scale +-70, jitter in
/// [0.5x, 2x], random placement, and randomized schedules alternating
/// walking and standing whose expected frame mix equals walking_mix.
Dataset generate_dataset(int n_tracks, double walking_mix, uint64_t seed,
                         const GaitConfig& base = GaitConfig{});

}  // namespace micromotion
