#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "micromotion/network.hpp"
#include "micromotion/skeleton.hpp"

namespace micromotion {

inline constexpr int kTrackFormatVersion = 1;
inline constexpr int kModelFormatVersion = 1;
inline constexpr int kFeatureSchemaVersion = 1;

struct TrackStats {
  std::string track_id;
  int64_t frames = 0;
  int64_t walking = 0, standing = 0, unknown = 0;
  int64_t imputed_points = 0;      // invalid keypoints filled by carry-forward
  int64_t never_valid_points = 0;  // invalid keypoints with nothing to carry
};

struct Dataset {
  std::vector<Track> tracks;  // imputed when produced by load_tracks
  std::vector<TrackStats> stats;

  int64_t total_frames() const;
  int64_t label_frames(MotionLabel label) const;
};

/// Builds a dataset (and per-track stats) from in-memory tracks. No
/// imputation counting; the tracks are taken as-is.
Dataset make_dataset(std::vector<Track> tracks);

struct TrackLine {
  std::string track_id;
  Pose pose;
  MotionLabel label = MotionLabel::Unknown;
};

/// Parses one line of the track format,
///   track_id,frame_index,label,x0,y0,c0,...,x17,y17,c17
/// Returns false for blank and '#' lines. Throws ParseError (tagged with
/// line_no) on malformed input.
bool parse_track_line(const std::string& line, int line_no, TrackLine* out);

/// Reads the whole track file: frames grouped by track_id, sorted by
/// frame_index and imputed. Throws ParseError with the offending line
/// number, or DuplicateFrame on (track_id, frame_index) collisions.
Dataset load_tracks(const std::string& path, double conf_threshold);

/// Writes the same format, one line per frame, with a version header.
/// Doubles are printed shortest-round-trip so a load/save cycle is exact.
void save_tracks(const Dataset& dataset, const std::string& path,
                 const std::vector<std::string>& header_comments = {});

/// Deterministic by-track split into (rest, held_out). held_out gets
/// round(fraction * n) tracks, clamped so both sides are non-empty.
std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, double fraction,
                                          uint64_t seed);

/// Binary model container: a text header (magic, versions, architecture,
/// config echo, tensor directory) followed by raw little-endian doubles and
/// an FNV-1a 64 checksum of everything before it. Round trips are bit-exact.
void save_model(const ModelParams& params,
                const std::vector<std::pair<std::string, std::string>>& config_echo,
                const std::string& path);

struct LoadedModel {
  ModelParams params;
  std::vector<std::pair<std::string, std::string>> config;
};

LoadedModel load_model(const std::string& path);

}  // namespace micromotion
