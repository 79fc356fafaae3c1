#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "micromotion/data_io.hpp"
#include "micromotion/eval.hpp"
#include "micromotion/network.hpp"

namespace micromotion {

struct TrainConfig {
  double lr0 = 2e-4;
  int epochs = 80;
  int batch_size = 32;
  double decay_factor = 0.9;
  int64_t decay_every = 3000;  // optimizer updates between decays
  double l2_weight = 5e-4;
  double dropout_rate = 0.5;
  int seq_len_min = 30;
  int seq_len_max = 64;
  uint64_t seed = 0;
  double val_fraction = 0.1;
  double conf_threshold = kDefaultConfThreshold;
  double grad_clip_norm = 5.0;
  double flip_prob = 0.5;  // per-crop mirror augmentation probability
};

/// lr0 * decay_factor^floor(step / decay_every).
double lr_schedule(const TrainConfig& config, int64_t update_step);

/// Mean over labeled timesteps of -ln p[true label] (probabilities floored
/// at kProbFloor) plus l2_weight times the squared norm of regularized
/// weights. Timesteps labeled -1 are excluded from the mean.
double sequence_loss(const std::vector<Probs>& probs,
                     const std::vector<int8_t>& labels, const ModelParams& params,
                     double l2_weight);

/// l2_weight * sum of squares over weight matrices (batch-norm parameters
/// and biases excluded).
double l2_penalty(const ModelParams& params, double l2_weight);

struct BackwardResult {
  double loss = 0.0;
  Gradients grads;
};

/// Analytic gradients of the batch loss with respect to every learnable
/// parameter, backpropagated through the classifier, the recurrence, the
/// dropout mask, train-mode batch norm and the embeddings. The dropout mask
/// must be the one used for the forward pass (empty disables dropout).
/// cache_out, when given, receives the forward intermediates.
BackwardResult backward(const Batch& batch, const ModelParams& params,
                        const Eigen::MatrixXd& dropout_mask, double l2_weight,
                        BatchCache* cache_out = nullptr);

/// Draws a dropout mask from rng per config, then runs backward.
BackwardResult backward(const Batch& batch, const ModelParams& params, Rng& rng,
                        const TrainConfig& config);

/// The loss backward differentiates, recomputed without gradients. Used by
/// the finite-difference checker.
double batch_loss(const Batch& batch, const ModelParams& params,
                  const Eigen::MatrixXd& dropout_mask, double l2_weight);

struct OptimizerState {
  std::vector<Eigen::VectorXd> first_moment;   // one flat vector per tensor
  std::vector<Eigen::VectorXd> second_moment;  // entries >= 0
  int64_t step = 0;

  static OptimizerState zeros_like(ModelParams& params);
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

/// Standard Adam with bias correction. Deterministic.
void adam_update(ModelParams& params, Gradients& grads, OptimizerState& state,
                 double lr);

/// Scales gradients so the global norm does not exceed max_norm; returns the
/// norm before clipping.
double clip_gradients(Gradients& grads, const ModelSpec& spec, double max_norm);

/// batch_size sequences: random contiguous crops of length uniform in
/// [seq_len_min, seq_len_max] from frame-count-weighted tracks (shorter
/// tracks used whole when they reach seq_len_min), each mirrored about its
/// bounding-box center with probability flip_prob before feature
/// extraction. Loss masks subsample the batch's over-represented class so
/// expected counted frames per class are equal. Throws InsufficientData
/// when no track qualifies.
Batch sample_batch(const Dataset& dataset, const TrainConfig& config,
                   const ModelSpec& spec, Rng& rng);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  MetricsReport val;
};

struct TrainResult {
  ModelParams final_params;
  ModelParams best_params;  // highest validation accuracy
  std::vector<EpochRecord> history;
  bool aborted = false;
  std::string abort_reason;
};

/// Full training run: splits off a validation set by track, then runs
/// backward + clip + adam updates for the configured number of epochs,
/// where one epoch draws batches until the training frames are covered
/// once in expectation. Aborts on non-finite values, returning the last
/// finite parameters.
TrainResult train(const Dataset& dataset, const TrainConfig& config,
                  const ModelSpec& spec = ModelSpec{});

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_path;
  Eigen::Index worst_index = 0;
  int64_t params_checked = 0;
};

/// Central finite differences over every learnable parameter against the
/// analytic gradients, with the dropout mask held fixed. Relative error is
/// |a - d| / max(|a| + |d|, 1e-8).
GradCheckReport grad_check(ModelParams& params, const Batch& batch, double eps,
                           const Eigen::MatrixXd& dropout_mask, double l2_weight);

/// grad_check on a seeded miniature model (2-wide groups, hidden size 3,
/// two sequences of four steps) with dropout active under a frozen mask.
GradCheckReport grad_check_tiny(uint64_t seed, double eps = 1e-5);

}  // namespace micromotion
