#include "micromotion/cli_config.hpp"

#include <charconv>
#include <fstream>

namespace micromotion {

namespace {

double to_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size() || !std::isfinite(v)) {
    throw ConfigError("bad value for " + key + ": '" + value + "'");
  }
  return v;
}

int64_t to_int(const std::string& key, const std::string& value) {
  int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw ConfigError("bad value for " + key + ": '" + value + "'");
  }
  return v;
}

uint64_t to_uint(const std::string& key, const std::string& value) {
  uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw ConfigError("bad value for " + key + ": '" + value + "'");
  }
  return v;
}

std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

}  // namespace

bool is_known_config_key(const std::string& key) {
  static const char* kKeys[] = {
      "lr0",         "epochs",        "batch_size",      "decay_factor",
      "decay_every", "l2_weight",     "dropout_rate",    "seq_len_min",
      "seq_len_max", "seed",          "val_fraction",    "conf_threshold",
      "flip_prob",
      "fps",         "cadence",       "swing_amplitude", "arm_amplitude",
      "jitter_sigma", "body_scale",   "mix",
  };
  for (const char* k : kKeys) {
    if (key == k) return true;
  }
  return false;
}

void apply_config_entry(CliSettings& s, const std::string& key,
                        const std::string& value) {
  if (key == "lr0") s.train.lr0 = to_double(key, value);
  else if (key == "epochs") s.train.epochs = static_cast<int>(to_int(key, value));
  else if (key == "batch_size") s.train.batch_size = static_cast<int>(to_int(key, value));
  else if (key == "decay_factor") s.train.decay_factor = to_double(key, value);
  else if (key == "decay_every") s.train.decay_every = to_int(key, value);
  else if (key == "l2_weight") s.train.l2_weight = to_double(key, value);
  else if (key == "dropout_rate") s.train.dropout_rate = to_double(key, value);
  else if (key == "seq_len_min") s.train.seq_len_min = static_cast<int>(to_int(key, value));
  else if (key == "seq_len_max") s.train.seq_len_max = static_cast<int>(to_int(key, value));
  else if (key == "seed") s.train.seed = to_uint(key, value);
  else if (key == "val_fraction") s.train.val_fraction = to_double(key, value);
  else if (key == "conf_threshold") s.train.conf_threshold = to_double(key, value);
  else if (key == "flip_prob") s.train.flip_prob = to_double(key, value);
  else if (key == "fps") s.gait.fps = to_double(key, value);
  else if (key == "cadence") s.gait.cadence = to_double(key, value);
  else if (key == "swing_amplitude") s.gait.swing_amplitude = to_double(key, value);
  else if (key == "arm_amplitude") s.gait.arm_amplitude = to_double(key, value);
  else if (key == "jitter_sigma") s.gait.jitter_sigma = to_double(key, value);
  else if (key == "body_scale") s.gait.body_scale = to_double(key, value);
  else if (key == "mix") s.mix = to_double(key, value);
  else throw ConfigError("unknown config key: " + key);
}

void apply_config_file(CliSettings& settings, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const size_t eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    }
    try {
      apply_config_entry(settings, key, value);
    } catch (const ConfigError& err) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + err.what());
    }
  }
}

void validate_settings(const CliSettings& s) {
  if (s.train.lr0 <= 0.0) throw ConfigError("lr0 must be positive");
  if (s.train.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (s.train.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (s.train.decay_factor <= 0.0 || s.train.decay_factor > 1.0) {
    throw ConfigError("decay_factor must lie in (0, 1]");
  }
  if (s.train.decay_every < 1) throw ConfigError("decay_every must be >= 1");
  if (s.train.l2_weight < 0.0) throw ConfigError("l2_weight must be >= 0");
  if (s.train.dropout_rate < 0.0 || s.train.dropout_rate >= 1.0) {
    throw ConfigError("dropout_rate must lie in [0, 1)");
  }
  if (s.train.seq_len_min < 1 || s.train.seq_len_min > s.train.seq_len_max) {
    throw ConfigError("need 0 < seq_len_min <= seq_len_max");
  }
  if (s.train.val_fraction <= 0.0 || s.train.val_fraction >= 1.0) {
    throw ConfigError("val_fraction must lie strictly between 0 and 1");
  }
  if (s.train.conf_threshold < 0.0 || s.train.conf_threshold > 1.0) {
    throw ConfigError("conf_threshold must lie in [0, 1]");
  }
  if (s.train.flip_prob < 0.0 || s.train.flip_prob > 1.0) {
    throw ConfigError("flip_prob must lie in [0, 1]");
  }
  if (s.gait.fps <= 0.0) throw ConfigError("fps must be positive");
  if (s.mix <= 0.0 || s.mix >= 1.0) throw ConfigError("mix must lie strictly between 0 and 1");
}

std::vector<std::pair<std::string, std::string>> settings_echo(const CliSettings& s) {
  std::vector<std::pair<std::string, std::string>> out;
  out.emplace_back("lr0", format_double(s.train.lr0));
  out.emplace_back("epochs", std::to_string(s.train.epochs));
  out.emplace_back("batch_size", std::to_string(s.train.batch_size));
  out.emplace_back("decay_factor", format_double(s.train.decay_factor));
  out.emplace_back("decay_every", std::to_string(s.train.decay_every));
  out.emplace_back("l2_weight", format_double(s.train.l2_weight));
  out.emplace_back("dropout_rate", format_double(s.train.dropout_rate));
  out.emplace_back("seq_len_min", std::to_string(s.train.seq_len_min));
  out.emplace_back("seq_len_max", std::to_string(s.train.seq_len_max));
  out.emplace_back("seed", std::to_string(s.train.seed));
  out.emplace_back("val_fraction", format_double(s.train.val_fraction));
  out.emplace_back("conf_threshold", format_double(s.train.conf_threshold));
  out.emplace_back("flip_prob", format_double(s.train.flip_prob));
  out.emplace_back("fps", format_double(s.gait.fps));
  out.emplace_back("cadence", format_double(s.gait.cadence));
  out.emplace_back("swing_amplitude", format_double(s.gait.swing_amplitude));
  out.emplace_back("arm_amplitude", format_double(s.gait.arm_amplitude));
  out.emplace_back("jitter_sigma", format_double(s.gait.jitter_sigma));
  out.emplace_back("body_scale", format_double(s.gait.body_scale));
  out.emplace_back("mix", format_double(s.mix));
  return out;
}

}  // namespace micromotion
