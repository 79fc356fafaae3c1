#include "micromotion/training.hpp"

#include <algorithm>
#include <cmath>

namespace micromotion {

double lr_schedule(const TrainConfig& config, int64_t update_step) {
  const int64_t decays = update_step / config.decay_every;
  return config.lr0 * std::pow(config.decay_factor, static_cast<double>(decays));
}

double l2_penalty(const ModelParams& params, double l2_weight) {
  double sq = 0.0;
  for (const EmbedParams& e : params.embeds) sq += e.weight.squaredNorm();
  sq += params.gru.reset_in.squaredNorm() + params.gru.reset_rec.squaredNorm();
  sq += params.gru.update_in.squaredNorm() + params.gru.update_rec.squaredNorm();
  sq += params.gru.cand_in.squaredNorm() + params.gru.cand_rec.squaredNorm();
  sq += params.classifier_weight.squaredNorm();
  return l2_weight * sq;
}

double sequence_loss(const std::vector<Probs>& probs,
                     const std::vector<int8_t>& labels, const ModelParams& params,
                     double l2_weight) {
  if (probs.size() != labels.size()) {
    throw LengthMismatch("sequence_loss: probs and labels differ in length");
  }
  if (probs.empty()) throw InsufficientData("sequence_loss on empty sequence");
  double ce = 0.0;
  int64_t counted = 0;
  for (size_t t = 0; t < probs.size(); ++t) {
    if (labels[t] < 0) continue;
    const double p = labels[t] == 0 ? probs[t].walking : probs[t].standing;
    ce += -std::log(std::max(p, kProbFloor));
    ++counted;
  }
  if (counted > 0) ce /= static_cast<double>(counted);
  return ce + l2_penalty(params, l2_weight);
}

namespace {

double cross_entropy_from_cache(const BatchCache& cache, int64_t* counted_out) {
  double ce = 0.0;
  int64_t counted = 0;
  for (Eigen::Index j = 0; j < cache.total; ++j) {
    if (cache.labels[j] < 0 || !cache.loss_mask[j]) continue;
    const double p = cache.probs(cache.labels[j], j);
    ce += -std::log(std::max(p, kProbFloor));
    ++counted;
  }
  if (counted > 0) ce /= static_cast<double>(counted);
  if (counted_out) *counted_out = counted;
  return ce;
}

}  // namespace

double batch_loss(const Batch& batch, const ModelParams& params,
                  const Eigen::MatrixXd& dropout_mask, double l2_weight) {
  BatchCache cache;
  forward_batch_train(batch, params, dropout_mask, cache);
  return cross_entropy_from_cache(cache, nullptr) + l2_penalty(params, l2_weight);
}

BackwardResult backward(const Batch& batch, const ModelParams& params,
                        const Eigen::MatrixXd& dropout_mask, double l2_weight,
                        BatchCache* cache_out) {
  BatchCache local;
  BatchCache& cache = cache_out ? *cache_out : local;
  forward_batch_train(batch, params, dropout_mask, cache);

  const ModelSpec& spec = params.spec;
  const Eigen::Index n = cache.total;
  const int h_dim = spec.hidden_dim;

  int64_t counted = 0;
  const double ce = cross_entropy_from_cache(cache, &counted);
  const double denom = counted > 0 ? static_cast<double>(counted) : 1.0;

  BackwardResult result;
  result.loss = ce + l2_penalty(params, l2_weight);
  result.grads = Gradients::zeros_like(params);
  Gradients& g = result.grads;

  // Softmax cross-entropy: d logits = (p - onehot) / counted on scored frames.
  Eigen::MatrixXd dlogits = Eigen::MatrixXd::Zero(spec.n_classes, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (cache.labels[j] < 0 || !cache.loss_mask[j]) continue;
    dlogits.col(j) = cache.probs.col(j) / denom;
    dlogits(cache.labels[j], j) -= 1.0 / denom;
  }

  g.classifier_weight = dlogits * cache.hidden.transpose();
  g.classifier_bias = dlogits.rowwise().sum();
  const Eigen::MatrixXd dh_out = params.classifier_weight.transpose() * dlogits;

  // Reverse sweep through the recurrence. Pre-activation gradients for the
  // three gates are collected per column; the weight gradients then reduce
  // to whole-batch products.
  Eigen::MatrixXd da_r(h_dim, n), da_z(h_dim, n), da_c(h_dim, n);
  for (const auto& [off, len] : cache.spans) {
    Eigen::ArrayXd carry = Eigen::ArrayXd::Zero(h_dim);
    for (Eigen::Index t = len - 1; t >= 0; --t) {
      const Eigen::Index col = off + t;
      const Eigen::ArrayXd dh = dh_out.col(col).array() + carry;
      const Eigen::ArrayXd hp = cache.hidden_prev.col(col).array();
      const Eigen::ArrayXd r = cache.reset.col(col).array();
      const Eigen::ArrayXd z = cache.update.col(col).array();
      const Eigen::ArrayXd c = cache.cand.col(col).array();

      const Eigen::ArrayXd dz = dh * (c - hp);
      const Eigen::ArrayXd dc = dh * z;
      Eigen::ArrayXd dhp = dh * (1.0 - z);

      const Eigen::ArrayXd ac = dc * (1.0 - c.square());
      da_c.col(col) = ac.matrix();
      const Eigen::ArrayXd back_c = (params.gru.cand_rec.transpose() * ac.matrix()).array();
      const Eigen::ArrayXd dr = back_c * hp;
      dhp += back_c * r;

      const Eigen::ArrayXd ar = dr * r * (1.0 - r);
      da_r.col(col) = ar.matrix();
      dhp += (params.gru.reset_rec.transpose() * ar.matrix()).array();

      const Eigen::ArrayXd az = dz * z * (1.0 - z);
      da_z.col(col) = az.matrix();
      dhp += (params.gru.update_rec.transpose() * az.matrix()).array();

      carry = dhp;
    }
  }

  const Eigen::MatrixXd reset_hp = cache.reset.cwiseProduct(cache.hidden_prev);
  g.gru.reset_in = da_r * cache.dropped.transpose();
  g.gru.reset_rec = da_r * cache.hidden_prev.transpose();
  g.gru.update_in = da_z * cache.dropped.transpose();
  g.gru.update_rec = da_z * cache.hidden_prev.transpose();
  g.gru.cand_in = da_c * cache.dropped.transpose();
  g.gru.cand_rec = da_c * reset_hp.transpose();

  Eigen::MatrixXd dconcat = params.gru.reset_in.transpose() * da_r +
                            params.gru.update_in.transpose() * da_z +
                            params.gru.cand_in.transpose() * da_c;
  if (dropout_mask.size() > 0) dconcat = dconcat.cwiseProduct(dropout_mask);

  const std::vector<int> groups = spec.active_groups();
  for (size_t gi = 0; gi < groups.size(); ++gi) {
    const EmbedParams& e = params.embeds[gi];
    const Eigen::MatrixXd de =
        dconcat.middleRows(static_cast<Eigen::Index>(gi) * spec.embed_dim, spec.embed_dim);
    const Eigen::MatrixXd db =
        de.cwiseProduct((1.0 - cache.embedded[gi].array().square()).matrix());

    g.embeds[gi].gamma = db.cwiseProduct(cache.normalized[gi]).rowwise().sum();
    g.embeds[gi].beta = db.rowwise().sum();

    // Batch-norm backward with biased batch variance.
    const Eigen::ArrayXXd dxhat = db.array().colwise() * e.gamma.array();
    const Eigen::ArrayXd inv_std = (cache.batch_var[gi].array() + kBnEpsilon).sqrt().inverse();
    const double inv_n = 1.0 / static_cast<double>(n);
    const Eigen::ArrayXd sum_dxhat = dxhat.rowwise().sum();
    const Eigen::ArrayXd sum_dxhat_xhat =
        (dxhat * cache.normalized[gi].array()).rowwise().sum();
    Eigen::ArrayXXd da = dxhat;
    da.colwise() -= inv_n * sum_dxhat;
    da -= cache.normalized[gi].array().colwise() * (inv_n * sum_dxhat_xhat);
    da.colwise() *= inv_std;
    g.embeds[gi].weight = da.matrix() * cache.inputs[gi].transpose();
  }

  // L2 term: d/dw of l2_weight * sum(w^2) on the weight matrices.
  if (l2_weight != 0.0) {
    const double two_l2 = 2.0 * l2_weight;
    for (size_t i = 0; i < params.embeds.size(); ++i) {
      g.embeds[i].weight += two_l2 * params.embeds[i].weight;
    }
    g.gru.reset_in += two_l2 * params.gru.reset_in;
    g.gru.reset_rec += two_l2 * params.gru.reset_rec;
    g.gru.update_in += two_l2 * params.gru.update_in;
    g.gru.update_rec += two_l2 * params.gru.update_rec;
    g.gru.cand_in += two_l2 * params.gru.cand_in;
    g.gru.cand_rec += two_l2 * params.gru.cand_rec;
    g.classifier_weight += two_l2 * params.classifier_weight;
  }
  return result;
}

BackwardResult backward(const Batch& batch, const ModelParams& params, Rng& rng,
                        const TrainConfig& config) {
  Eigen::MatrixXd mask;
  if (config.dropout_rate > 0.0) {
    Eigen::Index n = 0;
    for (const SequenceExample& ex : batch) n += ex.length();
    mask = draw_dropout_mask(params.spec.input_dim(), n, config.dropout_rate, rng);
  }
  return backward(batch, params, mask, config.l2_weight);
}

OptimizerState OptimizerState::zeros_like(ModelParams& params) {
  OptimizerState s;
  for (const TensorRef& ref : learnable_tensors(params)) {
    s.first_moment.push_back(Eigen::VectorXd::Zero(ref.size()));
    s.second_moment.push_back(Eigen::VectorXd::Zero(ref.size()));
  }
  return s;
}

void adam_update(ModelParams& params, Gradients& grads, OptimizerState& state,
                 double lr) {
  auto prefs = learnable_tensors(params);
  auto grefs = learnable_tensors(grads, params.spec);
  if (prefs.size() != grefs.size() || prefs.size() != state.first_moment.size()) {
    throw LengthMismatch("adam_update: parameter/gradient structure mismatch");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(kAdamBeta1, t);
  const double bc2 = 1.0 - std::pow(kAdamBeta2, t);
  for (size_t i = 0; i < prefs.size(); ++i) {
    Eigen::Map<Eigen::VectorXd> p(prefs[i].data, prefs[i].size());
    Eigen::Map<const Eigen::VectorXd> gv(grefs[i].data, grefs[i].size());
    Eigen::VectorXd& m = state.first_moment[i];
    Eigen::VectorXd& v = state.second_moment[i];
    m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * gv;
    v.array() = kAdamBeta2 * v.array() + (1.0 - kAdamBeta2) * gv.array().square();
    p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + kAdamEpsilon);
  }
}

double clip_gradients(Gradients& grads, const ModelSpec& spec, double max_norm) {
  auto refs = learnable_tensors(grads, spec);
  double sq = 0.0;
  for (const TensorRef& ref : refs) {
    Eigen::Map<const Eigen::VectorXd> v(ref.data, ref.size());
    sq += v.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NonFinite("gradient norm not finite");
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (const TensorRef& ref : refs) {
      Eigen::Map<Eigen::VectorXd> v(ref.data, ref.size());
      v *= scale;
    }
  }
  return norm;
}

namespace {

int8_t label_to_class(MotionLabel label) { return static_cast<int8_t>(label); }

Track crop_track(const Track& track, size_t start, size_t len) {
  Track out;
  out.track_id = track.track_id;
  out.fps = track.fps;
  out.poses.assign(track.poses.begin() + start, track.poses.begin() + start + len);
  if (!track.labels.empty()) {
    out.labels.assign(track.labels.begin() + start, track.labels.begin() + start + len);
  }
  return out;
}

// Union bounding box over the crop, ignoring frames that are degenerate on
// their own. Returns false when no frame yields a box.
bool crop_bbox_center(const Track& crop, double conf_threshold, double* center) {
  bool have = false;
  double x_min = 0.0, x_max = 0.0;
  for (const Pose& pose : crop.poses) {
    try {
      const BBox box = bbox_from_pose(pose, conf_threshold);
      if (!have) {
        x_min = box.x_min;
        x_max = box.x_max;
        have = true;
      } else {
        x_min = std::min(x_min, box.x_min);
        x_max = std::max(x_max, box.x_max);
      }
    } catch (const DegeneratePose&) {
    }
  }
  if (have) *center = 0.5 * (x_min + x_max);
  return have;
}

}  // namespace

Batch sample_batch(const Dataset& dataset, const TrainConfig& config,
                   const ModelSpec& spec, Rng& rng) {
  std::vector<size_t> eligible;
  int64_t weight_total = 0;
  std::vector<int64_t> weight_cum;
  for (size_t i = 0; i < dataset.tracks.size(); ++i) {
    if (dataset.tracks[i].poses.size() >= static_cast<size_t>(config.seq_len_min)) {
      eligible.push_back(i);
      weight_total += static_cast<int64_t>(dataset.tracks[i].poses.size());
      weight_cum.push_back(weight_total);
    }
  }
  if (eligible.empty()) {
    throw InsufficientData("no track reaches seq_len_min");
  }

  Batch batch;
  batch.reserve(config.batch_size);
  int attempts = 0;
  while (batch.size() < static_cast<size_t>(config.batch_size)) {
    if (++attempts > config.batch_size * 64) {
      throw InsufficientData("could not assemble a batch of usable crops");
    }

    // Draw the crop's target class evenly, then reject majority-class crops
    // that miss it (bounded tries). This sub-samples crops of the
    // over-represented class; the loss mask below trims the rest.
    const int8_t target = rng.bernoulli(0.5) ? 0 : 1;
    Track crop;
    for (int round = 0; round < 8; ++round) {
      const size_t want =
          static_cast<size_t>(config.seq_len_min) +
          rng.uniform_int(static_cast<uint64_t>(config.seq_len_max - config.seq_len_min + 1));
      const int64_t pick =
          static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(weight_total)));
      const size_t which = static_cast<size_t>(
          std::upper_bound(weight_cum.begin(), weight_cum.end(), pick) - weight_cum.begin());
      const Track& track = dataset.tracks[eligible[which]];

      const size_t len = std::min(want, track.poses.size());
      const size_t start =
          track.poses.size() > len
              ? static_cast<size_t>(rng.uniform_int(track.poses.size() - len + 1))
              : 0;
      crop = crop_track(track, start, len);

      int64_t crop_w = 0, crop_s = 0;
      for (MotionLabel label : crop.labels) {
        if (label == MotionLabel::Walking) ++crop_w;
        if (label == MotionLabel::Standing) ++crop_s;
      }
      const int8_t majority = crop_w >= crop_s ? 0 : 1;
      if (majority == target || crop_w == crop_s) break;
    }

    const bool flip = config.flip_prob > 0.0 && rng.bernoulli(config.flip_prob);
    if (flip) {
      double center = 0.0;
      if (crop_bbox_center(crop, config.conf_threshold, &center)) {
        crop = mirror_track(crop, center);
      }
    }

    const std::vector<FeatureFrame> frames =
        extract_track_features(crop, config.conf_threshold);
    if (frames.empty()) continue;

    std::vector<int8_t> labels(frames.size(), -1);
    size_t pi = 0;
    for (size_t f = 0; f < frames.size(); ++f) {
      while (pi < crop.poses.size() && crop.poses[pi].frame_index != frames[f].frame_index) {
        ++pi;
      }
      if (pi < crop.poses.size() && !crop.labels.empty()) {
        labels[f] = label_to_class(crop.labels[pi]);
      }
    }

    batch.push_back(pack_sequence(frames, spec, labels));
  }

  // Subsample the batch's over-represented class out of the loss so the
  // expected counted frames per class are equal.
  int64_t walking = 0, standing = 0;
  for (const SequenceExample& ex : batch) {
    for (int8_t label : ex.labels) {
      if (label == 0) ++walking;
      if (label == 1) ++standing;
    }
  }
  if (walking > 0 && standing > 0 && walking != standing) {
    const int8_t majority = walking > standing ? 0 : 1;
    const double keep_p =
        static_cast<double>(std::min(walking, standing)) /
        static_cast<double>(std::max(walking, standing));
    for (SequenceExample& ex : batch) {
      for (size_t f = 0; f < ex.labels.size(); ++f) {
        if (ex.labels[f] == majority) {
          ex.loss_mask[f] = rng.bernoulli(keep_p) ? 1 : 0;
        }
      }
    }
  }
  return batch;
}

TrainResult train(const Dataset& dataset, const TrainConfig& config,
                  const ModelSpec& spec) {
  if (dataset.tracks.empty()) throw InsufficientData("empty dataset");

  auto [train_set, val_set] = split_dataset(dataset, config.val_fraction, config.seed);

  TrainResult result;
  ModelParams params = init_params(spec, config.seed);
  result.best_params = params;
  OptimizerState opt = OptimizerState::zeros_like(params);
  Rng rng(config.seed * 0x9e3779b97f4a7c15ULL + 1);

  const int64_t train_frames = train_set.total_frames();

  double best_accuracy = -1.0;
  int64_t update_step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double loss_sum = 0.0;
    int64_t updates_this_epoch = 0;
    // One epoch covers the training frames once in expectation: batches are
    // drawn until their frames add up to the training-set size.
    for (int64_t consumed = 0; consumed < train_frames || updates_this_epoch == 0;) {
      try {
        Batch batch = sample_batch(train_set, config, spec, rng);
        Eigen::Index n = 0;
        for (const SequenceExample& ex : batch) n += ex.length();
        consumed += n;
        Eigen::MatrixXd mask;
        if (config.dropout_rate > 0.0) {
          mask = draw_dropout_mask(spec.input_dim(), n, config.dropout_rate, rng);
        }
        BatchCache cache;
        BackwardResult step = backward(batch, params, mask, config.l2_weight, &cache);
        update_running_stats(params, cache);
        clip_gradients(step.grads, spec, config.grad_clip_norm);

        const ModelParams snapshot = params;
        adam_update(params, step.grads, opt, lr_schedule(config, update_step));
        bool finite = true;
        for (const TensorRef& ref : learnable_tensors(params)) {
          Eigen::Map<const Eigen::VectorXd> v(ref.data, ref.size());
          if (!v.allFinite()) {
            finite = false;
            break;
          }
        }
        if (!finite) {
          params = snapshot;
          throw NonFinite("parameters diverged during update");
        }
        loss_sum += step.loss;
        ++update_step;
        ++updates_this_epoch;
      } catch (const NonFinite& err) {
        result.aborted = true;
        result.abort_reason = err.what();
        result.final_params = params;
        return result;
      }
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(updates_this_epoch);
    record.val = evaluate(params, val_set, config.conf_threshold);
    result.history.push_back(record);
    if (record.val.accuracy > best_accuracy) {
      best_accuracy = record.val.accuracy;
      result.best_params = params;
    }
  }
  result.final_params = params;
  if (config.epochs == 0) result.best_params = result.final_params;
  return result;
}

GradCheckReport grad_check(ModelParams& params, const Batch& batch, double eps,
                           const Eigen::MatrixXd& dropout_mask, double l2_weight) {
  Eigen::Index n_params = 0;
  for (const TensorRef& ref : learnable_tensors(params)) n_params += ref.size();
  if (n_params == 0) return GradCheckReport{};  // vacuously zero error

  BackwardResult analytic = backward(batch, params, dropout_mask, l2_weight);
  auto prefs = learnable_tensors(params);
  auto grefs = learnable_tensors(analytic.grads, params.spec);

  GradCheckReport report;
  for (size_t i = 0; i < prefs.size(); ++i) {
    for (Eigen::Index k = 0; k < prefs[i].size(); ++k) {
      const double saved = prefs[i].data[k];
      prefs[i].data[k] = saved + eps;
      const double up = batch_loss(batch, params, dropout_mask, l2_weight);
      prefs[i].data[k] = saved - eps;
      const double down = batch_loss(batch, params, dropout_mask, l2_weight);
      prefs[i].data[k] = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double a = grefs[i].data[k];
      const double rel = std::abs(a - fd) / std::max(std::abs(a) + std::abs(fd), 1e-8);
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_path = prefs[i].path;
        report.worst_index = k;
      }
      ++report.params_checked;
    }
  }
  return report;
}

GradCheckReport grad_check_tiny(uint64_t seed, double eps) {
  ModelSpec spec;
  spec.group_dims = {2, 2, 2, 2};
  spec.embed_dim = 2;
  spec.hidden_dim = 3;
  ModelParams params = init_params(spec, seed);

  Rng rng(seed * 7919 + 3);
  Batch batch;
  Eigen::Index total = 0;
  for (int s = 0; s < 2; ++s) {
    SequenceExample ex;
    const Eigen::Index t_len = 4;
    for (int g = 0; g < kNumGroups; ++g) {
      ex.groups[g].resize(2, t_len);
      for (Eigen::Index j = 0; j < t_len; ++j) {
        ex.groups[g](0, j) = rng.uniform(-1.0, 1.0);
        ex.groups[g](1, j) = rng.uniform(-1.0, 1.0);
      }
    }
    ex.labels.resize(t_len);
    for (Eigen::Index j = 0; j < t_len; ++j) {
      ex.labels[j] = rng.bernoulli(0.5) ? 1 : 0;
    }
    ex.loss_mask.assign(t_len, 1);
    total += t_len;
    batch.push_back(std::move(ex));
  }
  const Eigen::MatrixXd mask = draw_dropout_mask(spec.input_dim(), total, 0.5, rng);
  return grad_check(params, batch, eps, mask, 5e-4);
}

}  // namespace micromotion
