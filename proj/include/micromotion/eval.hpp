#pragma once

#include <cstdint>
#include <vector>

#include "micromotion/data_io.hpp"
#include "micromotion/network.hpp"

namespace micromotion {

/// Frame-level counts; walking is the positive class.
struct ConfusionMatrix {
  int64_t tp = 0, fp = 0, fn = 0, tn = 0;

  int64_t total() const { return tp + fp + fn + tn; }
};

struct MetricsReport {
  double precision = 0.0, recall = 0.0, f1 = 0.0, accuracy = 0.0;
  int64_t support_walking = 0, support_standing = 0;
  // cleared when the corresponding denominator was zero
  bool precision_defined = true, recall_defined = true, f1_defined = true;
};

/// Argmax with ties counted as walking.
int8_t predict_label(const Probs& probs);

/// Frame-level confusion over prediction/label pairs (0 walking, 1 standing).
/// Entries with label < 0 are skipped. Throws LengthMismatch.
ConfusionMatrix confusion(const std::vector<int8_t>& predictions,
                          const std::vector<int8_t>& labels);

/// precision = tp/(tp+fp), recall = tp/(tp+fn), f1 = 2PR/(P+R),
/// accuracy = (tp+tn)/total. Zero denominators yield 0 with the defined
/// flag cleared. Throws EmptyMatrix on an all-zero matrix.
MetricsReport metrics(const ConfusionMatrix& cm);

/// Infer-mode forward over every track, full length, frame-level confusion.
MetricsReport evaluate(const ModelParams& params, const Dataset& dataset,
                       double conf_threshold = kDefaultConfThreshold);

enum class AblationVariant : int {
  WithoutPosition = 0,
  WithoutDistance,
  WithoutAngle,
  WithoutDynamic,
  All,
};

const char* ablation_name(AblationVariant v);

/// Architecture for one ablation: the removed group's embedding disappears
/// and its input is dropped; WithoutAngle removes both angle groups;
/// WithoutDynamic removes the dynamic-angle group and zeroes the
/// differential half of the distance input.
ModelSpec make_model_spec(AblationVariant v);

struct AblationRow {
  AblationVariant variant;
  MetricsReport report;
};

struct TrainConfig;

/// Retrains from scratch per variant on train_data and evaluates on
/// eval_data, in Table-style row order (the five standard variants when
/// `variants` is empty).
std::vector<AblationRow> ablate_on(const Dataset& train_data, const Dataset& eval_data,
                                   const TrainConfig& config,
                                   std::vector<AblationVariant> variants = {});

/// Splits the dataset 80/20 by track (seeded with config.seed) and runs
/// ablate_on over the five standard variants.
std::vector<AblationRow> ablate(const Dataset& dataset, const TrainConfig& config);

}  // namespace micromotion
