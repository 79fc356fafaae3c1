// mmstate: pedestrian motion-state estimation from 2D pose tracks.
// Subcommands: synth, train, eval, infer, gradcheck, ablate.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "micromotion/cli_config.hpp"
#include "micromotion/data_io.hpp"
#include "micromotion/eval.hpp"
#include "micromotion/network.hpp"
#include "micromotion/synthgait.hpp"
#include "micromotion/training.hpp"

namespace mm = micromotion;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitData = 4;
constexpr int kExitNumeric = 5;

void print_config_echo(std::ostream& out, const mm::CliSettings& settings) {
  for (const auto& [key, value] : mm::settings_echo(settings)) {
    out << "# config " << key << "=" << value << "\n";
  }
}

json metrics_json(const mm::MetricsReport& r) {
  return json{{"precision", r.precision},
              {"recall", r.recall},
              {"f1", r.f1},
              {"accuracy", r.accuracy},
              {"support_walking", r.support_walking},
              {"support_standing", r.support_standing},
              {"precision_defined", r.precision_defined},
              {"recall_defined", r.recall_defined},
              {"f1_defined", r.f1_defined}};
}

void print_metrics_table(std::ostream& out, const mm::MetricsReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-10s %-10s %-10s %-10s\n%-10.4f %-10.4f %-10.4f %-10.4f\n",
                "precision", "accuracy", "f1", "recall", r.precision, r.accuracy, r.f1,
                r.recall);
  out << buf;
  out << "support: walking=" << r.support_walking
      << " standing=" << r.support_standing << "\n";
}

mm::Dataset load_nonempty(const std::string& path, double conf_threshold) {
  mm::Dataset ds = mm::load_tracks(path, conf_threshold);
  if (ds.tracks.empty()) throw mm::InsufficientData("no tracks in " + path);
  mm::TrackStats total;
  for (const mm::TrackStats& st : ds.stats) {
    total.frames += st.frames;
    total.walking += st.walking;
    total.standing += st.standing;
    total.unknown += st.unknown;
    total.imputed_points += st.imputed_points;
    total.never_valid_points += st.never_valid_points;
  }
  std::cout << "# loaded " << ds.tracks.size() << " tracks, " << total.frames
            << " frames: walking=" << total.walking << " standing=" << total.standing
            << " unknown=" << total.unknown << " imputed=" << total.imputed_points
            << " never_valid=" << total.never_valid_points << "\n";
  return ds;
}

void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw mm::IoError("cannot write " + path);
  out << j.dump(2) << "\n";
}

struct SynthArgs {
  std::string out;
  int tracks = 0;
  uint64_t seed = 0;
};

int run_synth(const SynthArgs& args, const mm::CliSettings& settings) {
  const mm::Dataset ds =
      mm::generate_dataset(args.tracks, settings.mix, args.seed, settings.gait);
  std::vector<std::string> comments;
  comments.push_back("command synth tracks=" + std::to_string(args.tracks) +
                     " seed=" + std::to_string(args.seed));
  for (const auto& [key, value] : mm::settings_echo(settings)) {
    comments.push_back("config " + key + "=" + value);
  }
  mm::save_tracks(ds, args.out, comments);
  std::cout << "wrote " << ds.tracks.size() << " tracks (" << ds.total_frames()
            << " frames) to " << args.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string out;
  std::string final_out;
};

int run_train(const TrainArgs& args, const mm::CliSettings& settings) {
  const mm::Dataset dataset = load_nonempty(args.data, settings.train.conf_threshold);
  print_config_echo(std::cout, settings);

  const mm::TrainResult result = mm::train(dataset, settings.train);
  for (const mm::EpochRecord& rec : result.history) {
    json line{{"epoch", rec.epoch},
              {"train_loss", rec.train_loss},
              {"val_accuracy", rec.val.accuracy},
              {"val_precision", rec.val.precision},
              {"val_recall", rec.val.recall},
              {"val_f1", rec.val.f1}};
    std::cout << line.dump() << "\n";
  }

  if (result.aborted) {
    // Keep the last finite parameters reachable, then report the failure.
    mm::save_model(result.final_params, mm::settings_echo(settings), args.out);
    std::cerr << "training aborted (" << result.abort_reason << "); checkpoint at "
              << args.out << "\n";
    return kExitNumeric;
  }

  mm::save_model(result.best_params, mm::settings_echo(settings), args.out);
  if (!args.final_out.empty()) {
    mm::save_model(result.final_params, mm::settings_echo(settings), args.final_out);
  }
  std::cout << "# wrote best model to " << args.out << "\n";
  return 0;
}

struct EvalArgs {
  std::string data;
  std::string model;
  std::string json_out;
  std::string dump_probs;
};

int run_eval(const EvalArgs& args, const mm::CliSettings& settings) {
  const mm::LoadedModel model = mm::load_model(args.model);
  const mm::Dataset dataset = load_nonempty(args.data, settings.train.conf_threshold);
  print_config_echo(std::cout, settings);

  const mm::MetricsReport report =
      mm::evaluate(model.params, dataset, settings.train.conf_threshold);
  print_metrics_table(std::cout, report);

  if (!args.json_out.empty()) write_json_file(metrics_json(report), args.json_out);
  if (!args.dump_probs.empty()) {
    std::ofstream out(args.dump_probs);
    if (!out) throw mm::IoError("cannot write " + args.dump_probs);
    out << "# columns: track_id,frame_index,p_walking,label\n";
    for (const mm::Track& track : dataset.tracks) {
      const auto probs =
          mm::infer_track(model.params, track, settings.train.conf_threshold);
      for (size_t i = 0; i < track.poses.size(); ++i) {
        const mm::MotionLabel label =
            track.labels.empty() ? mm::MotionLabel::Unknown : track.labels[i];
        out << track.track_id << ',' << track.poses[i].frame_index << ','
            << mm::format_double(probs[i].walking) << ',' << mm::label_name(label)
            << "\n";
      }
    }
  }
  return 0;
}

struct InferArgs {
  std::string data;
  std::string model;
  bool stream = false;
};

int run_infer(const InferArgs& args, const mm::CliSettings& settings) {
  const mm::LoadedModel model = mm::load_model(args.model);
  const double conf = settings.train.conf_threshold;
  std::cout << "# config conf_threshold=" << mm::format_double(conf)
            << (args.stream ? " mode=stream" : " mode=batch") << "\n";
  std::cout << "# columns: track_id,frame_index,p_walking\n";

  if (args.stream) {
    // Frames are consumed in arrival order with one state per track;
    // memory stays bounded by the number of concurrent tracks.
    std::ifstream in(args.data);
    if (!in) throw mm::IoError("cannot open " + args.data);
    std::map<std::string, mm::StreamState> states;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      mm::TrackLine parsed;
      if (!mm::parse_track_line(line, line_no, &parsed)) continue;
      auto [it, fresh] = states.try_emplace(parsed.track_id,
                                            mm::make_stream_state(model.params.spec));
      const mm::StreamResult res =
          mm::stream_step(it->second, parsed.pose, model.params, conf);
      std::cout << parsed.track_id << ',' << parsed.pose.frame_index << ','
                << mm::format_double(res.probs.walking) << "\n";
    }
    return 0;
  }

  const mm::Dataset dataset = load_nonempty(args.data, conf);
  for (const mm::Track& track : dataset.tracks) {
    const auto probs = mm::infer_track(model.params, track, conf);
    for (size_t i = 0; i < track.poses.size(); ++i) {
      std::cout << track.track_id << ',' << track.poses[i].frame_index << ','
                << mm::format_double(probs[i].walking) << "\n";
    }
  }
  return 0;
}

struct GradcheckArgs {
  uint64_t seed = 0;
  int trials = 1;
};

int run_gradcheck(const GradcheckArgs& args) {
  double worst = 0.0;
  std::string worst_desc;
  for (int i = 0; i < args.trials; ++i) {
    const uint64_t seed = args.seed + static_cast<uint64_t>(i);
    const mm::GradCheckReport report = mm::grad_check_tiny(seed);
    std::cout << "seed " << seed << ": max_rel_error "
              << mm::format_double(report.max_rel_error) << " at " << report.worst_path
              << "[" << report.worst_index << "] (" << report.params_checked
              << " params)\n";
    if (report.max_rel_error > worst) {
      worst = report.max_rel_error;
      worst_desc = report.worst_path + "[" + std::to_string(report.worst_index) + "]";
    }
  }
  std::cout << "worst: " << mm::format_double(worst) << " at " << worst_desc << "\n";
  if (worst >= 1e-4) {
    std::cerr << "gradient check failed (>= 1e-4)\n";
    return kExitNumeric;
  }
  return 0;
}

struct AblateArgs {
  std::string data;
  std::string json_out;
};

int run_ablate(const AblateArgs& args, const mm::CliSettings& settings) {
  const mm::Dataset dataset = load_nonempty(args.data, settings.train.conf_threshold);
  print_config_echo(std::cout, settings);

  const std::vector<mm::AblationRow> rows = mm::ablate(dataset, settings.train);
  char buf[200];
  std::snprintf(buf, sizeof(buf), "%-28s %-10s %-10s %-10s %-10s\n", "ablation",
                "precision", "accuracy", "f1", "recall");
  std::cout << buf;
  json jrows = json::array();
  for (const mm::AblationRow& row : rows) {
    std::snprintf(buf, sizeof(buf), "%-28s %-10.4f %-10.4f %-10.4f %-10.4f\n",
                  mm::ablation_name(row.variant), row.report.precision,
                  row.report.accuracy, row.report.f1, row.report.recall);
    std::cout << buf;
    json entry = metrics_json(row.report);
    entry["ablation"] = mm::ablation_name(row.variant);
    jrows.push_back(entry);
  }
  if (!args.json_out.empty()) write_json_file(jrows, args.json_out);
  return 0;
}

void add_train_options(CLI::App* cmd, mm::CliSettings& settings) {
  cmd->add_option("--lr0", settings.train.lr0);
  cmd->add_option("--epochs", settings.train.epochs);
  cmd->add_option("--batch_size", settings.train.batch_size);
  cmd->add_option("--decay_factor", settings.train.decay_factor);
  cmd->add_option("--decay_every", settings.train.decay_every);
  cmd->add_option("--l2_weight", settings.train.l2_weight);
  cmd->add_option("--dropout_rate", settings.train.dropout_rate);
  cmd->add_option("--seq_len_min", settings.train.seq_len_min);
  cmd->add_option("--seq_len_max", settings.train.seq_len_max);
  cmd->add_option("--seed", settings.train.seed);
  cmd->add_option("--val_fraction", settings.train.val_fraction);
  cmd->add_option("--conf_threshold", settings.train.conf_threshold);
  cmd->add_option("--flip_prob", settings.train.flip_prob);
}

void add_gait_options(CLI::App* cmd, mm::CliSettings& settings) {
  cmd->add_option("--fps", settings.gait.fps);
  cmd->add_option("--cadence", settings.gait.cadence);
  cmd->add_option("--swing_amplitude", settings.gait.swing_amplitude);
  cmd->add_option("--arm_amplitude", settings.gait.arm_amplitude);
  cmd->add_option("--jitter_sigma", settings.gait.jitter_sigma);
  cmd->add_option("--body_scale", settings.gait.body_scale);
  cmd->add_option("--mix", settings.mix);
}

int exit_code_for(const std::exception& err) {
  if (dynamic_cast<const mm::ConfigError*>(&err)) return kExitUsage;
  if (dynamic_cast<const mm::IoError*>(&err)) return kExitIo;
  if (dynamic_cast<const mm::NonFinite*>(&err) ||
      dynamic_cast<const mm::ChecksumMismatch*>(&err) ||
      dynamic_cast<const mm::VersionUnsupported*>(&err)) {
    return kExitNumeric;
  }
  if (dynamic_cast<const mm::Error*>(&err)) return kExitData;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pedestrian motion-state estimation from 2D pose tracks"};
  app.require_subcommand(1);

  mm::CliSettings settings;

  // The config file must apply before flag overrides, so find it first.
  std::string config_path;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) config_path = argv[i + 1];
    else if (arg.rfind("--config=", 0) == 0) config_path = arg.substr(9);
  }
  try {
    if (!config_path.empty()) mm::apply_config_file(settings, config_path);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return exit_code_for(err);
  }

  std::string config_opt;  // consumed above; registered so parsing accepts it
  auto add_config_opt = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_opt, "key=value config file");
  };

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "generate labeled synthetic tracks");
  add_config_opt(synth);
  synth->add_option("--out", synth_args.out, "output track file")->required();
  synth->add_option("--tracks", synth_args.tracks, "number of tracks")
      ->required()
      ->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_args.seed, "generator seed");
  add_gait_options(synth, settings);

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "train a model on a track file");
  add_config_opt(train);
  train->add_option("--data", train_args.data, "track file")->required();
  train->add_option("--out", train_args.out, "best-validation model path")->required();
  train->add_option("--final-out", train_args.final_out, "also write the final-epoch model");
  add_train_options(train, settings);

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "evaluate a model on a labeled track file");
  add_config_opt(eval);
  eval->add_option("--data", eval_args.data, "track file")->required();
  eval->add_option("--model", eval_args.model, "model file")->required();
  eval->add_option("--json", eval_args.json_out, "write metrics as JSON");
  eval->add_option("--dump-probs", eval_args.dump_probs, "write per-frame probabilities");
  eval->add_option("--conf_threshold", settings.train.conf_threshold);

  InferArgs infer_args;
  CLI::App* infer = app.add_subcommand("infer", "per-frame walking probabilities");
  add_config_opt(infer);
  infer->add_option("--data", infer_args.data, "track file")->required();
  infer->add_option("--model", infer_args.model, "model file")->required();
  infer->add_flag("--stream", infer_args.stream, "consume frames in arrival order");
  infer->add_option("--conf_threshold", settings.train.conf_threshold);

  GradcheckArgs gradcheck_args;
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  add_config_opt(gradcheck);
  gradcheck->add_option("--seed", gradcheck_args.seed, "first seed");
  gradcheck->add_option("--trials", gradcheck_args.trials, "number of seeds")
      ->check(CLI::PositiveNumber);

  AblateArgs ablate_args;
  CLI::App* ablate = app.add_subcommand("ablate", "retrain without each feature group");
  add_config_opt(ablate);
  ablate->add_option("--data", ablate_args.data, "track file")->required();
  ablate->add_option("--json", ablate_args.json_out, "write the table as JSON");
  add_train_options(ablate, settings);

  int rc = 0;
  synth->callback([&] {
    mm::validate_settings(settings);
    rc = run_synth(synth_args, settings);
  });
  train->callback([&] {
    mm::validate_settings(settings);
    rc = run_train(train_args, settings);
  });
  eval->callback([&] {
    mm::validate_settings(settings);
    rc = run_eval(eval_args, settings);
  });
  infer->callback([&] {
    mm::validate_settings(settings);
    rc = run_infer(infer_args, settings);
  });
  gradcheck->callback([&] { rc = run_gradcheck(gradcheck_args); });
  ablate->callback([&] {
    mm::validate_settings(settings);
    rc = run_ablate(ablate_args, settings);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return exit_code_for(err);
  }
  return rc;
}
