#pragma once

#include <string>
#include <utility>
#include <vector>

#include "micromotion/synthgait.hpp"
#include "micromotion/training.hpp"

namespace micromotion {

/// Effective command configuration: training hyperparameters, the base gait
/// generator settings, and the synthetic class mix. Populated from defaults,
/// then a key=value file, then command-line flags, in that order.
struct CliSettings {
  TrainConfig train;
  GaitConfig gait;
  double mix = 0.5;
};

/// Keys accepted in config files (and as flags): the TrainConfig fields
/// lr0, epochs, batch_size, decay_factor, decay_every, l2_weight,
/// dropout_rate, seq_len_min, seq_len_max, seed, val_fraction,
/// conf_threshold, and the GaitConfig fields fps, cadence, swing_amplitude,
/// arm_amplitude, jitter_sigma, body_scale, plus mix.
bool is_known_config_key(const std::string& key);

/// Applies one key=value assignment. Unknown keys and malformed values
/// throw ConfigError.
void apply_config_entry(CliSettings& settings, const std::string& key,
                        const std::string& value);

/// Line-oriented key=value file; '#' starts a comment, blank lines are
/// skipped. Whitespace around keys and values is trimmed.
void apply_config_file(CliSettings& settings, const std::string& path);

/// Range checks over the combined settings; throws ConfigError.
void validate_settings(const CliSettings& settings);

/// The full effective configuration as ordered key=value pairs, used for
/// output headers and the model-file config echo.
std::vector<std::pair<std::string, std::string>> settings_echo(const CliSettings& settings);

}  // namespace micromotion
