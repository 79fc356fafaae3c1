// Acceptance suite: runs every primary criterion end to end and prints one
// PASS/FAIL line per criterion. Exits with the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "feature_oracle.hpp"
#include "micromotion/data_io.hpp"
#include "micromotion/eval.hpp"
#include "micromotion/features.hpp"
#include "micromotion/network.hpp"
#include "micromotion/synthgait.hpp"
#include "micromotion/training.hpp"

using namespace micromotion;

namespace {

int g_failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
  std::cout << (pass ? "[PASS] " : "[FAIL] ") << name << ": " << detail << "\n";
  if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string work_dir() {
  static std::string dir = [] {
    std::string d = "/tmp/mm_acceptance_" + std::to_string(::getpid());
    if (std::system(("mkdir -p " + d).c_str()) != 0) d = "/tmp";
    return d;
  }();
  return dir;
}

int run_cli(const std::string& args, const std::string& stdout_path = "/dev/null") {
  const std::string cmd =
      std::string(MMSTATE_BIN) + " " + args + " > " + stdout_path + " 2>/dev/null";
  return WEXITSTATUS(std::system(cmd.c_str()));
}

std::string fmt(double v) { return format_double(v); }

// --- gradient correctness --------------------------------------------------

void criterion_gradients() {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string worst_path;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const GradCheckReport r = grad_check_tiny(seed);
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_path = r.worst_path;
    }
  }
  const int cli_rc = run_cli("gradcheck --seed 0 --trials 10");
  const double elapsed = seconds_since(start);
  report("gradient-correctness",
         worst < 1e-4 && cli_rc == 0 && elapsed < 60.0,
         "worst rel error " + fmt(worst) + " at " + worst_path + " over 10 seeds, " +
             fmt(elapsed) + " s (cmd_gradcheck rc " + std::to_string(cli_rc) + ")");
}

// --- feature oracle equivalence ---------------------------------------------

void criterion_feature_oracle() {
  Rng rng(10001);
  double worst = 0.0;
  int64_t frames_checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Track t;
    t.track_id = "oracle";
    const int frames = 1 + static_cast<int>(rng.uniform_int(10));
    for (int f = 0; f < frames; ++f) {
      Pose p;
      p.frame_index = f;
      for (Keypoint& kp : p.keypoints) {
        kp = {rng.uniform(0.0, 1000.0), rng.uniform(0.0, 1000.0), rng.uniform(0.0, 1.0)};
      }
      t.poses.push_back(p);
    }
    const auto ours = extract_track_features(t, 0.3);
    const auto expected = mmtest::oracle_track_features(t, 0.3);
    if (ours.size() != expected.size()) {
      report("feature-oracle-equivalence", false, "frame count mismatch");
      return;
    }
    for (size_t f = 0; f < ours.size(); ++f) {
      ++frames_checked;
      for (int i = 0; i < kPositionDim; ++i) {
        worst = std::max(worst, std::abs(ours[f].position[i] - expected[f].position[i]));
      }
      for (int i = 0; i < kDistanceDim; ++i) {
        worst = std::max(worst, std::abs(ours[f].distance[i] - expected[f].distance[i]));
      }
      for (int i = 0; i < kAngleDim; ++i) {
        worst = std::max(worst,
                         std::abs(ours[f].angle_static[i] - expected[f].angle_static[i]));
        worst = std::max(
            worst, std::abs(ours[f].angle_dynamic[i] - expected[f].angle_dynamic[i]));
      }
    }
  }
  report("feature-oracle-equivalence", worst <= 1e-9,
         "max deviation " + fmt(worst) + " over 1000 tracks (" +
             std::to_string(frames_checked) + " frames)");
}

// --- GRU unit oracle ---------------------------------------------------------

void criterion_gru_oracle() {
  GruParams g;
  g.reset_in = g.update_in = g.cand_in = Eigen::MatrixXd::Constant(1, 1, 1.0);
  g.reset_rec = g.update_rec = g.cand_rec = Eigen::MatrixXd::Constant(1, 1, 1.0);

  const Eigen::VectorXd h = gru_step(g, Eigen::VectorXd::Constant(1, 1.0),
                                     Eigen::VectorXd::Constant(1, 0.5));
  // Scalar evaluation of the recurrence: r = z = sigmoid(1.5),
  // cand = tanh(1 + 0.5 r), h = (1-z) 0.5 + z cand = 0.8165945318562012.
  const double expected = 0.81659453185620123;
  const Eigen::VectorXd zero =
      gru_step(g, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1));
  const bool pass = std::abs(h[0] - expected) < 1e-5 && zero[0] == 0.0;
  report("gru-unit-oracle", pass,
         "h_t = " + fmt(h[0]) + " (expected " + fmt(expected) + "), zero fixed point " +
             fmt(zero[0]));
}

// --- streaming vs batch -------------------------------------------------------

void criterion_streaming(const std::string& model_path) {
  const std::string data = work_dir() + "/stream100.mmtrack";
  const std::string batch_csv = work_dir() + "/batch.csv";
  const std::string stream_csv = work_dir() + "/stream.csv";
  if (run_cli("synth --out " + data + " --tracks 100 --seed 301") != 0 ||
      run_cli("infer --data " + data + " --model " + model_path, batch_csv) != 0 ||
      run_cli("infer --stream --data " + data + " --model " + model_path, stream_csv) !=
          0) {
    report("streaming-equals-batch", false, "cli invocation failed");
    return;
  }

  auto parse = [](const std::string& path) {
    std::map<std::string, double> out;
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      const size_t c2 = line.find(',', line.find(',') + 1);
      out[line.substr(0, c2)] = std::stod(line.substr(c2 + 1));
    }
    return out;
  };
  const auto batch = parse(batch_csv);
  const auto stream = parse(stream_csv);
  if (batch.size() != stream.size() || batch.empty()) {
    report("streaming-equals-batch", false, "frame sets differ");
    return;
  }
  double worst = 0.0;
  for (const auto& [key, p] : batch) {
    const auto it = stream.find(key);
    if (it == stream.end()) {
      report("streaming-equals-batch", false, "missing frame " + key);
      return;
    }
    worst = std::max(worst, std::abs(p - it->second));
  }
  report("streaming-equals-batch", worst <= 1e-6,
         "max |p_batch - p_stream| " + fmt(worst) + " over " +
             std::to_string(batch.size()) + " frames of 100 tracks");
}

// --- symmetry suite ------------------------------------------------------------

struct SymmetryResult {
  double flip = 0.0, translation = 0.0, scale = 0.0;
};

double frame_diff(const FeatureFrame& a, const FeatureFrame& b) {
  double worst = 0.0;
  for (int i = 0; i < kPositionDim; ++i) {
    worst = std::max(worst, std::abs(a.position[i] - b.position[i]));
  }
  for (int i = 0; i < kDistanceDim; ++i) {
    worst = std::max(worst, std::abs(a.distance[i] - b.distance[i]));
  }
  for (int i = 0; i < kAngleDim; ++i) {
    worst = std::max(worst, std::abs(a.angle_static[i] - b.angle_static[i]));
    worst = std::max(worst, std::abs(a.angle_dynamic[i] - b.angle_dynamic[i]));
  }
  return worst;
}

FeatureFrame mirrored_expectation(const FeatureFrame& f) {
  FeatureFrame out = f;
  const int joint_swap[8] = {2, 3, 0, 1, 6, 7, 4, 5};
  for (int i = 0; i < 8; ++i) {
    out.position[2 * i] = -f.position[2 * joint_swap[i]];
    out.position[2 * i + 1] = f.position[2 * joint_swap[i] + 1];
  }
  const int seg_swap[8] = {2, 3, 0, 1, 6, 7, 4, 5};
  for (int i = 0; i < 8; ++i) {
    out.angle_static[i] = wrap_unit(1.0 - f.angle_static[seg_swap[i]]);
    out.angle_dynamic[i] = -f.angle_dynamic[seg_swap[i]];
  }
  const int cross_swap[4] = {1, 0, 3, 2};
  for (int i = 0; i < 4; ++i) {
    out.angle_static[12 + i] = wrap_unit(1.0 - f.angle_static[12 + cross_swap[i]]);
    out.angle_dynamic[12 + i] = -f.angle_dynamic[12 + cross_swap[i]];
  }
  return out;
}

void criterion_symmetries() {
  Rng rng(10007);
  SymmetryResult worst;
  for (int trial = 0; trial < 1000; ++trial) {
    Track t;
    t.track_id = "sym";
    for (int f = 0; f < 2; ++f) {
      Pose p;
      p.frame_index = f;
      for (Keypoint& kp : p.keypoints) {
        kp = {rng.uniform(100.0, 900.0), rng.uniform(100.0, 900.0), 1.0};
      }
      while (std::hypot(p.keypoints[kHipL].x - p.keypoints[kHipR].x,
                        p.keypoints[kHipL].y - p.keypoints[kHipR].y) < 10.0) {
        p.keypoints[kHipL] = {rng.uniform(100.0, 900.0), rng.uniform(100.0, 900.0), 1.0};
      }
      t.poses.push_back(p);
    }
    const auto plain = extract_track_features(t, 0.3);

    const double axis = rng.uniform(-200.0, 1200.0);
    const auto flipped = extract_track_features(mirror_track(t, axis), 0.3);
    for (size_t f = 0; f < plain.size(); ++f) {
      worst.flip =
          std::max(worst.flip, frame_diff(flipped[f], mirrored_expectation(plain[f])));
    }

    Track shifted = t;
    const double dx = rng.uniform(-500.0, 500.0), dy = rng.uniform(-500.0, 500.0);
    for (Pose& p : shifted.poses) {
      for (Keypoint& kp : p.keypoints) {
        kp.x += dx;
        kp.y += dy;
      }
    }
    const auto translated = extract_track_features(shifted, 0.3);
    for (size_t f = 0; f < plain.size(); ++f) {
      worst.translation = std::max(worst.translation, frame_diff(translated[f], plain[f]));
    }

    Track scaled = t;
    const double s = rng.uniform(0.3, 3.0);
    for (Pose& p : scaled.poses) {
      for (Keypoint& kp : p.keypoints) {
        kp.x *= s;
        kp.y *= s;
      }
    }
    const auto rescaled = extract_track_features(scaled, 0.3);
    for (size_t f = 0; f < plain.size(); ++f) {
      worst.scale = std::max(worst.scale, frame_diff(rescaled[f], plain[f]));
    }
  }
  report("flip-equivariance-suite",
         worst.flip <= 1e-9 && worst.translation <= 1e-9 && worst.scale <= 1e-9,
         "max deviations over 1000 poses: flip " + fmt(worst.flip) + ", translation " +
             fmt(worst.translation) + ", scale " + fmt(worst.scale));
}

// --- synthetic benchmark --------------------------------------------------------

struct BenchmarkArtifacts {
  Dataset train_set;
  Dataset eval_set;
  ModelParams model;
  double accuracy = 0.0;
  bool trained = false;
};

double transition_accuracy(const ModelParams& params, const Dataset& eval_set,
                           int64_t* frames_out) {
  int64_t correct = 0, total = 0;
  for (const Track& track : eval_set.tracks) {
    const auto probs = infer_track(params, track, kDefaultConfThreshold);
    std::vector<bool> near_boundary(track.poses.size(), false);
    for (size_t i = 1; i < track.labels.size(); ++i) {
      if (track.labels[i] == track.labels[i - 1]) continue;
      const int64_t b = static_cast<int64_t>(i);
      for (int64_t j = b - 5; j <= b + 5; ++j) {
        if (j >= 0 && j < static_cast<int64_t>(track.poses.size())) {
          near_boundary[static_cast<size_t>(j)] = true;
        }
      }
    }
    for (size_t i = 0; i < track.poses.size(); ++i) {
      if (!near_boundary[i] || track.labels[i] == MotionLabel::Unknown) continue;
      ++total;
      if (predict_label(probs[i]) == static_cast<int8_t>(track.labels[i])) ++correct;
    }
  }
  if (frames_out) *frames_out = total;
  return total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

BenchmarkArtifacts criterion_benchmark() {
  const auto start = std::chrono::steady_clock::now();
  BenchmarkArtifacts art;
  art.train_set = generate_dataset(200, 0.5, 2024);
  art.eval_set = generate_dataset(50, 0.5, 4048);

  int64_t transitions = 0;
  for (const Track& track : art.eval_set.tracks) {
    for (size_t i = 1; i < track.labels.size(); ++i) {
      if (track.labels[i] != track.labels[i - 1]) ++transitions;
    }
  }

  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.seed = 7;
  const TrainResult result = train(art.train_set, cfg);
  art.model = result.best_params;
  art.trained = !result.aborted;

  const MetricsReport report_all = evaluate(art.model, art.eval_set);
  int64_t transition_frames = 0;
  const double trans_acc = transition_accuracy(art.model, art.eval_set, &transition_frames);
  const double elapsed = seconds_since(start);
  art.accuracy = report_all.accuracy;

  const bool pass = art.trained && report_all.accuracy >= 0.95 && report_all.f1 >= 0.95 &&
                    trans_acc >= 0.80 && elapsed < 600.0 && transitions > 0;
  report("synthetic-benchmark", pass,
         "accuracy " + fmt(report_all.accuracy) + ", f1 " + fmt(report_all.f1) +
             ", transition accuracy " + fmt(trans_acc) + " over " +
             std::to_string(transition_frames) + " frames (" +
             std::to_string(transitions) + " transitions), " + fmt(elapsed) + " s");
  return art;
}

void criterion_ablation(const BenchmarkArtifacts& art) {
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.seed = 7;
  const TrainResult no_dyn =
      train(art.train_set, cfg, make_model_spec(AblationVariant::WithoutDynamic));
  const MetricsReport report_no_dyn = evaluate(no_dyn.best_params, art.eval_set);
  report("ablation-ordering", report_no_dyn.accuracy <= art.accuracy,
         "without-dynamic accuracy " + fmt(report_no_dyn.accuracy) +
             " <= with-all accuracy " + fmt(art.accuracy));
}

// --- determinism through the CLI -------------------------------------------------

void criterion_determinism() {
  const std::string data = work_dir() + "/det.mmtrack";
  const std::string m1 = work_dir() + "/det1.mm";
  const std::string m2 = work_dir() + "/det2.mm";
  if (run_cli("synth --out " + data + " --tracks 30 --seed 555") != 0 ||
      run_cli("train --data " + data + " --out " + m1 + " --epochs 2 --seed 9") != 0 ||
      run_cli("train --data " + data + " --out " + m2 + " --epochs 2 --seed 9") != 0) {
    report("train-determinism", false, "cli invocation failed");
    return;
  }
  auto read = [](const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  };
  const std::string a = read(m1);
  const std::string b = read(m2);
  report("train-determinism", !a.empty() && a == b,
         "two cmd_train runs produced " + std::to_string(a.size()) +
             " identical bytes: " + (a == b ? "yes" : "no"));
}

// --- serialization -----------------------------------------------------------------

void criterion_serialization(const BenchmarkArtifacts& art) {
  const std::string path = work_dir() + "/serialize.mm";
  ModelParams original = art.model;
  save_model(original, {{"source", "acceptance"}}, path);
  LoadedModel loaded = load_model(path);

  bool bitwise = loaded.params.spec == original.spec;
  const auto ta = all_tensors(original);
  auto tb = all_tensors(loaded.params);
  bitwise = bitwise && ta.size() == tb.size();
  for (size_t i = 0; bitwise && i < ta.size(); ++i) {
    if (ta[i].size() != tb[i].size()) bitwise = false;
    for (Eigen::Index k = 0; bitwise && k < ta[i].size(); ++k) {
      if (ta[i].data[k] != tb[i].data[k]) bitwise = false;
    }
  }

  bool inference_bitwise = true;
  const Track& probe = art.eval_set.tracks.front();
  const auto before = infer_track(original, probe, kDefaultConfThreshold);
  const auto after = infer_track(loaded.params, probe, kDefaultConfThreshold);
  for (size_t i = 0; i < before.size(); ++i) {
    if (before[i].walking != after[i].walking ||
        before[i].standing != after[i].standing) {
      inference_bitwise = false;
    }
  }
  report("serialization-round-trip", bitwise && inference_bitwise,
         std::string("tensors bitwise: ") + (bitwise ? "yes" : "no") +
             ", inference bitwise: " + (inference_bitwise ? "yes" : "no"));
}

}  // namespace

int main() {
  criterion_gradients();
  criterion_feature_oracle();
  criterion_gru_oracle();

  // The benchmark model also serves the streaming and serialization checks.
  const BenchmarkArtifacts art = criterion_benchmark();
  const std::string model_path = work_dir() + "/benchmark.mm";
  save_model(art.model, {}, model_path);

  criterion_streaming(model_path);
  criterion_symmetries();
  criterion_ablation(art);
  criterion_determinism();
  criterion_serialization(art);

  std::cout << (g_failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED") << " ("
            << (9 - g_failures) << "/9 criteria)\n";
  return g_failures;
}
