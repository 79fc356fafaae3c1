#include "micromotion/eval.hpp"

#include "micromotion/training.hpp"

namespace micromotion {

int8_t predict_label(const Probs& probs) {
  return probs.walking >= probs.standing ? 0 : 1;
}

ConfusionMatrix confusion(const std::vector<int8_t>& predictions,
                          const std::vector<int8_t>& labels) {
  if (predictions.size() != labels.size()) {
    throw LengthMismatch("confusion: predictions and labels differ in length");
  }
  ConfusionMatrix cm;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) continue;
    const bool pred_walking = predictions[i] == 0;
    const bool is_walking = labels[i] == 0;
    if (pred_walking && is_walking) ++cm.tp;
    else if (pred_walking && !is_walking) ++cm.fp;
    else if (!pred_walking && is_walking) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

MetricsReport metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw EmptyMatrix("confusion matrix has no counts");
  MetricsReport r;
  r.support_walking = cm.tp + cm.fn;
  r.support_standing = cm.fp + cm.tn;
  if (cm.tp + cm.fp > 0) {
    r.precision = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
  } else {
    r.precision_defined = false;
  }
  if (cm.tp + cm.fn > 0) {
    r.recall = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
  } else {
    r.recall_defined = false;
  }
  if (r.precision + r.recall > 0.0) {
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  } else {
    r.f1_defined = false;
  }
  r.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  return r;
}

MetricsReport evaluate(const ModelParams& params, const Dataset& dataset,
                       double conf_threshold) {
  ConfusionMatrix total;
  for (const Track& track : dataset.tracks) {
    const std::vector<Probs> probs = infer_track(params, track, conf_threshold);
    std::vector<int8_t> preds(probs.size());
    for (size_t i = 0; i < probs.size(); ++i) preds[i] = predict_label(probs[i]);
    std::vector<int8_t> labels(track.poses.size(), -1);
    for (size_t i = 0; i < track.labels.size(); ++i) {
      labels[i] = static_cast<int8_t>(track.labels[i]);
    }
    const ConfusionMatrix cm = confusion(preds, labels);
    total.tp += cm.tp;
    total.fp += cm.fp;
    total.fn += cm.fn;
    total.tn += cm.tn;
  }
  return metrics(total);
}

const char* ablation_name(AblationVariant v) {
  switch (v) {
    case AblationVariant::WithoutPosition:
      return "without position features";
    case AblationVariant::WithoutDistance:
      return "without distance features";
    case AblationVariant::WithoutAngle:
      return "without angle features";
    case AblationVariant::WithoutDynamic:
      return "without dynamic features";
    default:
      return "with all features";
  }
}

ModelSpec make_model_spec(AblationVariant v) {
  ModelSpec spec;
  switch (v) {
    case AblationVariant::WithoutPosition:
      spec.active[static_cast<int>(FeatureGroup::Position)] = false;
      break;
    case AblationVariant::WithoutDistance:
      spec.active[static_cast<int>(FeatureGroup::Distance)] = false;
      break;
    case AblationVariant::WithoutAngle:
      spec.active[static_cast<int>(FeatureGroup::AngleStatic)] = false;
      spec.active[static_cast<int>(FeatureGroup::AngleDynamic)] = false;
      break;
    case AblationVariant::WithoutDynamic:
      spec.active[static_cast<int>(FeatureGroup::AngleDynamic)] = false;
      spec.zero_dynamic_distance = true;
      break;
    case AblationVariant::All:
      break;
  }
  return spec;
}

std::vector<AblationRow> ablate_on(const Dataset& train_data, const Dataset& eval_data,
                                   const TrainConfig& config,
                                   std::vector<AblationVariant> variants) {
  if (variants.empty()) {
    variants = {AblationVariant::WithoutPosition, AblationVariant::WithoutDistance,
                AblationVariant::WithoutAngle, AblationVariant::WithoutDynamic,
                AblationVariant::All};
  }
  std::vector<AblationRow> rows;
  rows.reserve(variants.size());
  for (AblationVariant v : variants) {
    const TrainResult result = train(train_data, config, make_model_spec(v));
    rows.push_back(AblationRow{
        v, evaluate(result.best_params, eval_data, config.conf_threshold)});
  }
  return rows;
}

std::vector<AblationRow> ablate(const Dataset& dataset, const TrainConfig& config) {
  auto [train_part, eval_part] = split_dataset(dataset, 0.2, config.seed);
  return ablate_on(train_part, eval_part, config);
}

}  // namespace micromotion
