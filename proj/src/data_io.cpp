#include "micromotion/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace micromotion {

namespace {

uint64_t fnv1a64(const char* data, size_t n, uint64_t h = 14695981039346656037ULL) {
  for (size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ULL;
  }
  return h;
}

double parse_double(std::string_view token, int line_no) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc{} || ptr != token.data() + token.size() || !std::isfinite(v)) {
    throw ParseError("line " + std::to_string(line_no) + ": bad number '" +
                     std::string(token) + "'");
  }
  return v;
}

int64_t parse_int(std::string_view token, int line_no) {
  int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc{} || ptr != token.data() + token.size()) {
    throw ParseError("line " + std::to_string(line_no) + ": bad integer '" +
                     std::string(token) + "'");
  }
  return v;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (true) {
    const size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

}  // namespace

int64_t Dataset::total_frames() const {
  int64_t n = 0;
  for (const Track& t : tracks) n += static_cast<int64_t>(t.poses.size());
  return n;
}

int64_t Dataset::label_frames(MotionLabel label) const {
  int64_t n = 0;
  for (const Track& t : tracks) {
    for (MotionLabel l : t.labels) {
      if (l == label) ++n;
    }
  }
  return n;
}

Dataset make_dataset(std::vector<Track> tracks) {
  Dataset ds;
  ds.tracks = std::move(tracks);
  for (const Track& t : ds.tracks) {
    TrackStats st;
    st.track_id = t.track_id;
    st.frames = static_cast<int64_t>(t.poses.size());
    for (MotionLabel l : t.labels) {
      if (l == MotionLabel::Walking) ++st.walking;
      else if (l == MotionLabel::Standing) ++st.standing;
      else ++st.unknown;
    }
    ds.stats.push_back(std::move(st));
  }
  return ds;
}

bool parse_track_line(const std::string& raw_line, int line_no, TrackLine* out) {
  std::string_view line = raw_line;
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  if (line.empty() || line[0] == '#') return false;

  const auto fields = split_csv(line);
  if (fields.size() != 3 + 3 * kNumKeypoints) {
    throw ParseError("line " + std::to_string(line_no) + ": expected " +
                     std::to_string(3 + 3 * kNumKeypoints) + " fields, got " +
                     std::to_string(fields.size()));
  }

  out->track_id = std::string(fields[0]);
  if (out->track_id.empty()) {
    throw ParseError("line " + std::to_string(line_no) + ": empty track id");
  }
  out->pose.frame_index = static_cast<int>(parse_int(fields[1], line_no));
  if (out->pose.frame_index < 0) {
    throw ParseError("line " + std::to_string(line_no) + ": negative frame index");
  }
  try {
    out->label = label_from_name(std::string(fields[2]));
  } catch (const ParseError& err) {
    throw ParseError("line " + std::to_string(line_no) + ": " + err.what());
  }
  for (int k = 0; k < kNumKeypoints; ++k) {
    out->pose.keypoints[k].x = parse_double(fields[3 + 3 * k], line_no);
    out->pose.keypoints[k].y = parse_double(fields[4 + 3 * k], line_no);
    out->pose.keypoints[k].confidence = parse_double(fields[5 + 3 * k], line_no);
  }
  return true;
}

Dataset load_tracks(const std::string& path, double conf_threshold) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);

  struct RawTrack {
    std::vector<Pose> poses;
    std::vector<MotionLabel> labels;
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, RawTrack> raw;

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    TrackLine parsed;
    if (!parse_track_line(line, line_no, &parsed)) continue;

    auto it = raw.find(parsed.track_id);
    if (it == raw.end()) {
      order.push_back(parsed.track_id);
      it = raw.emplace(parsed.track_id, RawTrack{}).first;
    }
    it->second.poses.push_back(parsed.pose);
    it->second.labels.push_back(parsed.label);
  }

  Dataset ds;
  for (const std::string& id : order) {
    RawTrack& rt = raw[id];
    std::vector<size_t> idx(rt.poses.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
      return rt.poses[a].frame_index < rt.poses[b].frame_index;
    });

    Track track;
    track.track_id = id;
    for (size_t i : idx) {
      if (!track.poses.empty() && track.poses.back().frame_index == rt.poses[i].frame_index) {
        throw DuplicateFrame("track " + id + " frame " +
                             std::to_string(rt.poses[i].frame_index));
      }
      track.poses.push_back(rt.poses[i]);
      track.labels.push_back(rt.labels[i]);
    }

    TrackStats st;
    st.track_id = id;
    st.frames = static_cast<int64_t>(track.poses.size());
    for (MotionLabel l : track.labels) {
      if (l == MotionLabel::Walking) ++st.walking;
      else if (l == MotionLabel::Standing) ++st.standing;
      else ++st.unknown;
    }
    std::array<bool, kNumKeypoints> seen{};
    for (const Pose& pose : track.poses) {
      for (int k = 0; k < kNumKeypoints; ++k) {
        if (pose.keypoints[k].valid(conf_threshold)) {
          seen[k] = true;
        } else if (seen[k]) {
          ++st.imputed_points;
        } else {
          ++st.never_valid_points;
        }
      }
    }

    ds.tracks.push_back(impute_track(track, conf_threshold));
    ds.stats.push_back(std::move(st));
  }
  return ds;
}

void save_tracks(const Dataset& dataset, const std::string& path,
                 const std::vector<std::string>& header_comments) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "# mmtrack " << kTrackFormatVersion << "\n";
  for (const std::string& comment : header_comments) {
    out << "# " << comment << "\n";
  }
  for (const Track& track : dataset.tracks) {
    for (size_t i = 0; i < track.poses.size(); ++i) {
      const Pose& pose = track.poses[i];
      const MotionLabel label =
          track.labels.empty() ? MotionLabel::Unknown : track.labels[i];
      out << track.track_id << ',' << pose.frame_index << ',' << label_name(label);
      for (const Keypoint& kp : pose.keypoints) {
        out << ',' << format_double(kp.x) << ',' << format_double(kp.y) << ','
            << format_double(kp.confidence);
      }
      out << '\n';
    }
  }
  if (!out) throw IoError("write failed for " + path);
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, double fraction,
                                          uint64_t seed) {
  const size_t n = dataset.tracks.size();
  if (n < 2) throw InsufficientData("split needs at least 2 tracks");
  size_t held = static_cast<size_t>(std::llround(fraction * static_cast<double>(n)));
  held = std::clamp<size_t>(held, 1, n - 1);

  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (size_t i = n - 1; i > 0; --i) {
    const size_t j = static_cast<size_t>(rng.uniform_int(i + 1));
    std::swap(idx[i], idx[j]);
  }

  std::vector<bool> is_held(n, false);
  for (size_t i = 0; i < held; ++i) is_held[idx[i]] = true;

  Dataset rest, held_out;
  for (size_t i = 0; i < n; ++i) {
    Dataset& dst = is_held[i] ? held_out : rest;
    dst.tracks.push_back(dataset.tracks[i]);
    if (i < dataset.stats.size()) dst.stats.push_back(dataset.stats[i]);
  }
  return {std::move(rest), std::move(held_out)};
}

namespace {

void append_u64_le(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

uint64_t read_u64_le(const char* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return v;
}

std::string csv_ints(const std::array<int, kNumGroups>& a) {
  std::string s;
  for (int i = 0; i < kNumGroups; ++i) {
    if (i) s += ',';
    s += std::to_string(a[i]);
  }
  return s;
}

std::string csv_bools(const std::array<bool, kNumGroups>& a) {
  std::string s;
  for (int i = 0; i < kNumGroups; ++i) {
    if (i) s += ',';
    s += a[i] ? '1' : '0';
  }
  return s;
}

}  // namespace

void save_model(const ModelParams& params,
                const std::vector<std::pair<std::string, std::string>>& config_echo,
                const std::string& path) {
  // The header is text; tensor payloads are raw little-endian doubles in
  // Eigen's column-major order. The trailing 8 bytes are the FNV-1a 64
  // checksum of everything before them.
  std::string blob;
  blob += "MMSTATE " + std::to_string(kModelFormatVersion) + "\n";
  blob += "feature_schema " + std::to_string(kFeatureSchemaVersion) + "\n";
  const ModelSpec& spec = params.spec;
  blob += "arch.active " + csv_bools(spec.active) + "\n";
  blob += "arch.zero_dynamic_distance " + std::string(spec.zero_dynamic_distance ? "1" : "0") + "\n";
  blob += "arch.group_dims " + csv_ints(spec.group_dims) + "\n";
  blob += "arch.embed_dim " + std::to_string(spec.embed_dim) + "\n";
  blob += "arch.hidden_dim " + std::to_string(spec.hidden_dim) + "\n";
  blob += "arch.n_classes " + std::to_string(spec.n_classes) + "\n";
  for (const auto& [key, value] : config_echo) {
    if (key.find_first_of(" \n") != std::string::npos ||
        value.find('\n') != std::string::npos) {
      throw ConfigError("config echo entries must not contain spaces or newlines");
    }
    blob += "config." + key + " " + value + "\n";
  }

  ModelParams& mutable_params = const_cast<ModelParams&>(params);
  const std::vector<TensorRef> tensors = all_tensors(mutable_params);
  for (const TensorRef& t : tensors) {
    blob += "tensor " + t.path + " " + std::to_string(t.rows) + " " +
            std::to_string(t.cols) + "\n";
  }
  blob += "data\n";
  for (const TensorRef& t : tensors) {
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      uint64_t bits;
      static_assert(sizeof(bits) == sizeof(double));
      std::memcpy(&bits, &t.data[i], sizeof(bits));
      append_u64_le(blob, bits);
    }
  }
  append_u64_le(blob, fnv1a64(blob.data(), blob.size()));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("write failed for " + path);
}

LoadedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (blob.size() < 16) throw ParseError("model file truncated");

  const uint64_t stored = read_u64_le(blob.data() + blob.size() - 8);
  const uint64_t actual = fnv1a64(blob.data(), blob.size() - 8);
  if (stored != actual) throw ChecksumMismatch("model checksum mismatch in " + path);

  size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const size_t eol = blob.find('\n', pos);
    if (eol == std::string::npos) throw ParseError("model header truncated");
    std::string line = blob.substr(pos, eol - pos);
    pos = eol + 1;
    return line;
  };

  {
    const std::string magic = next_line();
    if (magic.rfind("MMSTATE ", 0) != 0) throw ParseError("not a model file");
    const int version = static_cast<int>(parse_int(std::string_view(magic).substr(8), 1));
    if (version != kModelFormatVersion) {
      throw VersionUnsupported("model format version " + std::to_string(version));
    }
  }
  {
    const std::string schema = next_line();
    if (schema.rfind("feature_schema ", 0) != 0) throw ParseError("missing feature_schema");
    const int schema_version =
        static_cast<int>(parse_int(std::string_view(schema).substr(15), 2));
    if (schema_version != kFeatureSchemaVersion) {
      throw VersionUnsupported("feature schema version " + std::to_string(schema_version));
    }
  }

  ModelSpec spec;
  LoadedModel loaded;
  std::vector<std::tuple<std::string, Eigen::Index, Eigen::Index>> directory;
  while (true) {
    const std::string line = next_line();
    if (line == "data") break;
    const size_t space = line.find(' ');
    if (space == std::string::npos) throw ParseError("bad model header line: " + line);
    const std::string key = line.substr(0, space);
    const std::string value = line.substr(space + 1);
    if (key == "arch.active") {
      const auto parts = split_csv(value);
      if (parts.size() != kNumGroups) throw ParseError("bad arch.active");
      for (int i = 0; i < kNumGroups; ++i) spec.active[i] = parts[i] == "1";
    } else if (key == "arch.zero_dynamic_distance") {
      spec.zero_dynamic_distance = value == "1";
    } else if (key == "arch.group_dims") {
      const auto parts = split_csv(value);
      if (parts.size() != kNumGroups) throw ParseError("bad arch.group_dims");
      for (int i = 0; i < kNumGroups; ++i) {
        spec.group_dims[i] = static_cast<int>(parse_int(parts[i], 0));
      }
    } else if (key == "arch.embed_dim") {
      spec.embed_dim = static_cast<int>(parse_int(value, 0));
    } else if (key == "arch.hidden_dim") {
      spec.hidden_dim = static_cast<int>(parse_int(value, 0));
    } else if (key == "arch.n_classes") {
      spec.n_classes = static_cast<int>(parse_int(value, 0));
    } else if (key.rfind("config.", 0) == 0) {
      loaded.config.emplace_back(key.substr(7), value);
    } else if (key == "tensor") {
      const size_t s1 = value.find(' ');
      const size_t s2 = value.find(' ', s1 + 1);
      if (s1 == std::string::npos || s2 == std::string::npos) {
        throw ParseError("bad tensor line: " + line);
      }
      directory.emplace_back(value.substr(0, s1),
                             parse_int(std::string_view(value).substr(s1 + 1, s2 - s1 - 1), 0),
                             parse_int(std::string_view(value).substr(s2 + 1), 0));
    } else {
      throw ParseError("unknown model header key: " + key);
    }
  }

  // Shape the parameter set from the declared architecture, then fill from
  // the directory.
  loaded.params = init_params(spec, 0);
  const std::vector<TensorRef> tensors = all_tensors(loaded.params);
  if (tensors.size() != directory.size()) {
    throw ParseError("tensor directory does not match the declared architecture");
  }
  Eigen::Index total = 0;
  for (size_t i = 0; i < tensors.size(); ++i) {
    const auto& [name, rows, cols] = directory[i];
    if (name != tensors[i].path || rows != tensors[i].rows || cols != tensors[i].cols) {
      throw ParseError("tensor " + name + " does not match the declared architecture");
    }
    total += rows * cols;
  }
  const size_t expected = pos + static_cast<size_t>(total) * 8 + 8;
  if (blob.size() != expected) throw ParseError("model payload size mismatch");

  for (const TensorRef& t : tensors) {
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      const uint64_t bits = read_u64_le(blob.data() + pos);
      std::memcpy(&t.data[i], &bits, sizeof(double));
      pos += 8;
    }
  }
  return loaded;
}

}  // namespace micromotion
