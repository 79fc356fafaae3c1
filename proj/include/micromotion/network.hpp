#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "micromotion/features.hpp"

namespace micromotion {

enum class FeatureGroup : int {
  Position = 0,
  Distance = 1,
  AngleStatic = 2,
  AngleDynamic = 3,
};

inline constexpr int kNumGroups = 4;
inline constexpr std::array<int, kNumGroups> kGroupFeatureDims = {
    kPositionDim, kDistanceDim, kAngleDim, kAngleDim};

const char* group_name(FeatureGroup g);

/// Architecture descriptor. The default is the full model: four 16-unit
/// embeddings feeding a 64-unit recurrent layer and a 2-class softmax.
/// Ablations deactivate groups (their embedding disappears and the recurrent
/// input narrows) or zero the differential half of the distance input.
struct ModelSpec {
  std::array<bool, kNumGroups> active = {true, true, true, true};
  bool zero_dynamic_distance = false;
  std::array<int, kNumGroups> group_dims = kGroupFeatureDims;
  int embed_dim = 16;
  int hidden_dim = 64;
  int n_classes = 2;

  int n_active() const;
  std::vector<int> active_groups() const;
  int input_dim() const { return embed_dim * n_active(); }
  int feature_dim() const;

  bool operator==(const ModelSpec&) const = default;
};

/// Linear map plus batch-norm statistics for one feature group.
struct EmbedParams {
  Eigen::MatrixXd weight;        // embed_dim x group_dim
  Eigen::VectorXd gamma, beta;   // embed_dim
  Eigen::VectorXd running_mean;  // embed_dim
  Eigen::VectorXd running_var;   // embed_dim, entries > 0
};

/// The six recurrent weight matrices; no bias terms.
struct GruParams {
  Eigen::MatrixXd reset_in, update_in, cand_in;     // hidden x input
  Eigen::MatrixXd reset_rec, update_rec, cand_rec;  // hidden x hidden
};

struct ModelParams {
  ModelSpec spec;
  std::vector<EmbedParams> embeds;  // one per active group, in group order
  GruParams gru;
  Eigen::MatrixXd classifier_weight;  // n_classes x hidden
  Eigen::VectorXd classifier_bias;    // n_classes

  /// Index into embeds for an active group; -1 when inactive.
  int embed_index(FeatureGroup g) const;
};

struct EmbedGrads {
  Eigen::MatrixXd weight;
  Eigen::VectorXd gamma, beta;
};

/// Same shape-for-shape structure as the learnable part of ModelParams.
struct Gradients {
  std::vector<EmbedGrads> embeds;
  GruParams gru;
  Eigen::MatrixXd classifier_weight;
  Eigen::VectorXd classifier_bias;

  static Gradients zeros_like(const ModelParams& params);
};

/// Flat view of one parameter tensor, used by the optimizer, the gradient
/// checker and the serializer. Traversal order is fixed.
struct TensorRef {
  std::string path;
  double* data;
  Eigen::Index rows, cols;
  bool regularized;  // participates in the L2 penalty

  Eigen::Index size() const { return rows * cols; }
};

std::vector<TensorRef> learnable_tensors(ModelParams& params);
/// Same paths and order as learnable_tensors(params) for params of `spec`.
std::vector<TensorRef> learnable_tensors(Gradients& grads, const ModelSpec& spec);
/// Learnables plus batch-norm running statistics, for serialization.
std::vector<TensorRef> all_tensors(ModelParams& params);

/// Glorot-uniform weights, identity batch norm, zero classifier bias.
/// Deterministic for a given seed.
ModelParams init_params(const ModelSpec& spec, uint64_t seed);

struct Probs {
  double walking = 0.5;
  double standing = 0.5;
};

enum class Mode { Train, Infer };

/// tanh(BN(W x)) using running statistics (inference normalization).
Eigen::VectorXd embed_infer(const EmbedParams& embed, const Eigen::VectorXd& input);

/// One recurrence step:
///   r = sigmoid(Wrx x + Wrh h),  z = sigmoid(Wzx x + Wzh h),
///   c = tanh(Wxh x + Whh (r .* h)),  h' = (1 - z) .* h + z .* c.
Eigen::VectorXd gru_step(const GruParams& gru, const Eigen::VectorXd& input,
                         const Eigen::VectorXd& h_prev);

/// Softmax over classifier logits, computed with max subtraction.
Probs classify(const ModelParams& params, const Eigen::VectorXd& hidden);

/// The raw per-group inputs of one sequence, columns ordered by time, with
/// per-frame labels (-1 marks frames excluded from any loss) and a loss
/// inclusion mask.
struct SequenceExample {
  std::array<Eigen::MatrixXd, kNumGroups> groups;
  std::vector<int8_t> labels;
  std::vector<uint8_t> loss_mask;

  Eigen::Index length() const { return static_cast<Eigen::Index>(labels.size()); }
};

using Batch = std::vector<SequenceExample>;

SequenceExample pack_sequence(const std::vector<FeatureFrame>& frames,
                              const ModelSpec& spec,
                              const std::vector<int8_t>& labels);

/// Every intermediate of a train-mode batch forward pass, kept for the
/// backward sweep. Sequences are laid out side by side; spans records the
/// (offset, length) of each.
struct BatchCache {
  Eigen::Index total = 0;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> spans;
  std::vector<Eigen::MatrixXd> inputs;      // per active group, d_g x N
  std::vector<Eigen::MatrixXd> preact;      // embed_dim x N, before BN
  std::vector<Eigen::VectorXd> batch_mean;  // per active group
  std::vector<Eigen::VectorXd> batch_var;   // biased, per active group
  std::vector<Eigen::MatrixXd> normalized;  // embed_dim x N, after BN scale-shift input
  std::vector<Eigen::MatrixXd> embedded;    // embed_dim x N, after tanh
  Eigen::MatrixXd concat;                   // input_dim x N, before dropout
  Eigen::MatrixXd dropped;                  // input_dim x N, after dropout
  Eigen::MatrixXd reset, update, cand;      // hidden x N
  Eigen::MatrixXd hidden, hidden_prev;      // hidden x N
  Eigen::MatrixXd probs;                    // n_classes x N
  std::vector<int8_t> labels;               // flattened
  std::vector<uint8_t> loss_mask;           // flattened
};

/// Train-mode forward over a batch. Batch-norm statistics are computed over
/// all frames of the batch; dropout_mask (input_dim x N of 0 / 1/keep
/// entries) may be empty to disable dropout.
void forward_batch_train(const Batch& batch, const ModelParams& params,
                         const Eigen::MatrixXd& dropout_mask, BatchCache& cache);

/// Folds the cached batch statistics into the running statistics with
/// momentum kBnMomentum. The training loop calls this once per update.
void update_running_stats(ModelParams& params, const BatchCache& cache);

/// Inverted-dropout multiplier matrix: entries are 0 with probability rate,
/// else 1/(1-rate).
Eigen::MatrixXd draw_dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate,
                                  Rng& rng);

/// One Probs per timestep. Train mode normalizes with this sequence's batch
/// statistics and applies dropout drawn from rng (no running-stat update);
/// infer mode uses running statistics and no dropout.
std::vector<Probs> forward_sequence(const std::vector<FeatureFrame>& frames,
                                    const ModelParams& params, Mode mode,
                                    Rng* dropout_rng = nullptr,
                                    double dropout_rate = 0.5);

/// Per-track online inference state. Owns the carry-forward imputation
/// buffer, the previous static features for differencing, the hidden vector
/// and the last emitted probabilities.
struct StreamState {
  Eigen::VectorXd hidden;
  std::array<double, kDistanceStaticDim> prev_distance{};
  std::array<double, kAngleDim> prev_angle{};
  bool has_prev = false;
  std::array<Keypoint, kNumKeypoints> carry{};
  std::array<bool, kNumKeypoints> carry_valid{};
  int64_t step = 0;
  Probs last{};
};

StreamState make_stream_state(const ModelSpec& spec);

struct StreamResult {
  Probs probs;
  bool stale = false;  // set when the frame was degenerate and probs repeat
};

/// Consumes one frame. Degenerate frames leave the inference state unchanged
/// and repeat the previous probabilities (uniform at step 0), flagged stale.
StreamResult stream_step(StreamState& state, const Pose& pose,
                         const ModelParams& params, double conf_threshold);

/// Batch-mode inference aligned to the track's poses: frames dropped by
/// feature extraction repeat the previous probabilities, like the stream.
std::vector<Probs> infer_track(const ModelParams& params, const Track& track,
                               double conf_threshold);

}  // namespace micromotion
