#include "micromotion/network.hpp"

#include <cmath>

namespace micromotion {

const char* group_name(FeatureGroup g) {
  switch (g) {
    case FeatureGroup::Position:
      return "position";
    case FeatureGroup::Distance:
      return "distance";
    case FeatureGroup::AngleStatic:
      return "angle_static";
    default:
      return "angle_dynamic";
  }
}

int ModelSpec::n_active() const {
  int n = 0;
  for (bool a : active) n += a ? 1 : 0;
  return n;
}

std::vector<int> ModelSpec::active_groups() const {
  std::vector<int> out;
  for (int g = 0; g < kNumGroups; ++g) {
    if (active[g]) out.push_back(g);
  }
  return out;
}

int ModelSpec::feature_dim() const {
  int n = 0;
  for (int g = 0; g < kNumGroups; ++g) {
    if (active[g]) n += group_dims[g];
  }
  return n;
}

int ModelParams::embed_index(FeatureGroup g) const {
  int idx = 0;
  for (int i = 0; i < kNumGroups; ++i) {
    if (i == static_cast<int>(g)) return spec.active[i] ? idx : -1;
    if (spec.active[i]) ++idx;
  }
  return -1;
}

Gradients Gradients::zeros_like(const ModelParams& params) {
  Gradients g;
  g.embeds.reserve(params.embeds.size());
  for (const EmbedParams& e : params.embeds) {
    EmbedGrads eg;
    eg.weight = Eigen::MatrixXd::Zero(e.weight.rows(), e.weight.cols());
    eg.gamma = Eigen::VectorXd::Zero(e.gamma.size());
    eg.beta = Eigen::VectorXd::Zero(e.beta.size());
    g.embeds.push_back(std::move(eg));
  }
  auto zeros = [](const Eigen::MatrixXd& m) {
    return Eigen::MatrixXd::Zero(m.rows(), m.cols());
  };
  g.gru.reset_in = zeros(params.gru.reset_in);
  g.gru.update_in = zeros(params.gru.update_in);
  g.gru.cand_in = zeros(params.gru.cand_in);
  g.gru.reset_rec = zeros(params.gru.reset_rec);
  g.gru.update_rec = zeros(params.gru.update_rec);
  g.gru.cand_rec = zeros(params.gru.cand_rec);
  g.classifier_weight = zeros(params.classifier_weight);
  g.classifier_bias = Eigen::VectorXd::Zero(params.classifier_bias.size());
  return g;
}

namespace {

template <typename Model, typename Fn>
void visit_learnables(Model& m, const ModelSpec& spec, Fn&& fn) {
  const std::vector<int> groups = spec.active_groups();
  for (size_t i = 0; i < m.embeds.size(); ++i) {
    const std::string base =
        std::string("embed.") + group_name(static_cast<FeatureGroup>(groups[i]));
    fn(base + ".weight", m.embeds[i].weight, true);
    fn(base + ".gamma", m.embeds[i].gamma, false);
    fn(base + ".beta", m.embeds[i].beta, false);
  }
  fn("gru.reset_in", m.gru.reset_in, true);
  fn("gru.reset_rec", m.gru.reset_rec, true);
  fn("gru.update_in", m.gru.update_in, true);
  fn("gru.update_rec", m.gru.update_rec, true);
  fn("gru.cand_in", m.gru.cand_in, true);
  fn("gru.cand_rec", m.gru.cand_rec, true);
  fn("classifier.weight", m.classifier_weight, true);
  fn("classifier.bias", m.classifier_bias, false);
}

template <typename Tensor>
TensorRef make_ref(const std::string& path, Tensor& t, bool regularized) {
  return TensorRef{path, t.data(), t.rows(), t.cols(), regularized};
}

}  // namespace

std::vector<TensorRef> learnable_tensors(ModelParams& params) {
  std::vector<TensorRef> out;
  visit_learnables(params, params.spec, [&](const std::string& path, auto& t, bool reg) {
    out.push_back(make_ref(path, t, reg));
  });
  return out;
}

std::vector<TensorRef> learnable_tensors(Gradients& grads, const ModelSpec& spec) {
  std::vector<TensorRef> out;
  visit_learnables(grads, spec, [&](const std::string& path, auto& t, bool reg) {
    out.push_back(make_ref(path, t, reg));
  });
  return out;
}

std::vector<TensorRef> all_tensors(ModelParams& params) {
  std::vector<TensorRef> out = learnable_tensors(params);
  const std::vector<int> groups = params.spec.active_groups();
  for (size_t i = 0; i < params.embeds.size(); ++i) {
    const std::string base =
        std::string("embed.") + group_name(static_cast<FeatureGroup>(groups[i]));
    out.push_back(make_ref(base + ".running_mean", params.embeds[i].running_mean, false));
    out.push_back(make_ref(base + ".running_var", params.embeds[i].running_var, false));
  }
  return out;
}

namespace {

Eigen::MatrixXd glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) {
      m(i, j) = rng.uniform(-bound, bound);
    }
  }
  return m;
}

Eigen::ArrayXd sigmoid(const Eigen::ArrayXd& x) {
  return ((-x).exp() + 1.0).inverse();
}

}  // namespace

ModelParams init_params(const ModelSpec& spec, uint64_t seed) {
  Rng rng(seed);
  ModelParams p;
  p.spec = spec;
  for (int g : spec.active_groups()) {
    EmbedParams e;
    e.weight = glorot(spec.embed_dim, spec.group_dims[g], rng);
    e.gamma = Eigen::VectorXd::Ones(spec.embed_dim);
    e.beta = Eigen::VectorXd::Zero(spec.embed_dim);
    e.running_mean = Eigen::VectorXd::Zero(spec.embed_dim);
    e.running_var = Eigen::VectorXd::Ones(spec.embed_dim);
    p.embeds.push_back(std::move(e));
  }
  const int in = spec.input_dim();
  const int h = spec.hidden_dim;
  p.gru.reset_in = glorot(h, in, rng);
  p.gru.reset_rec = glorot(h, h, rng);
  p.gru.update_in = glorot(h, in, rng);
  p.gru.update_rec = glorot(h, h, rng);
  p.gru.cand_in = glorot(h, in, rng);
  p.gru.cand_rec = glorot(h, h, rng);
  p.classifier_weight = glorot(spec.n_classes, h, rng);
  p.classifier_bias = Eigen::VectorXd::Zero(spec.n_classes);
  return p;
}

Eigen::VectorXd embed_infer(const EmbedParams& embed, const Eigen::VectorXd& input) {
  const Eigen::ArrayXd pre = (embed.weight * input).array();
  const Eigen::ArrayXd norm =
      (pre - embed.running_mean.array()) / (embed.running_var.array() + kBnEpsilon).sqrt();
  Eigen::VectorXd out = (norm * embed.gamma.array() + embed.beta.array()).tanh().matrix();
  if (!out.allFinite()) throw NonFinite("embedding output not finite");
  return out;
}

Eigen::VectorXd gru_step(const GruParams& gru, const Eigen::VectorXd& input,
                         const Eigen::VectorXd& h_prev) {
  const Eigen::ArrayXd r = sigmoid((gru.reset_in * input + gru.reset_rec * h_prev).array());
  const Eigen::ArrayXd z = sigmoid((gru.update_in * input + gru.update_rec * h_prev).array());
  const Eigen::ArrayXd c =
      ((gru.cand_in * input).array() +
       (gru.cand_rec * (r * h_prev.array()).matrix()).array())
          .tanh();
  Eigen::VectorXd h = ((1.0 - z) * h_prev.array() + z * c).matrix();
  if (!h.allFinite()) throw NonFinite("gru hidden state not finite");
  return h;
}

Probs classify(const ModelParams& params, const Eigen::VectorXd& hidden) {
  Eigen::VectorXd logits = params.classifier_weight * hidden + params.classifier_bias;
  const double top = logits.maxCoeff();
  const Eigen::ArrayXd e = (logits.array() - top).exp();
  const double denom = e.sum();
  return Probs{e[0] / denom, e[1] / denom};
}

namespace {

Eigen::VectorXd group_input(const FeatureFrame& frame, int g, const ModelSpec& spec) {
  Eigen::VectorXd v(spec.group_dims[g]);
  switch (static_cast<FeatureGroup>(g)) {
    case FeatureGroup::Position:
      for (int i = 0; i < kPositionDim; ++i) v[i] = frame.position[i];
      break;
    case FeatureGroup::Distance:
      for (int i = 0; i < kDistanceDim; ++i) v[i] = frame.distance[i];
      if (spec.zero_dynamic_distance) {
        for (int i = kDistanceStaticDim; i < kDistanceDim; ++i) v[i] = 0.0;
      }
      break;
    case FeatureGroup::AngleStatic:
      for (int i = 0; i < kAngleDim; ++i) v[i] = frame.angle_static[i];
      break;
    case FeatureGroup::AngleDynamic:
      for (int i = 0; i < kAngleDim; ++i) v[i] = frame.angle_dynamic[i];
      break;
  }
  return v;
}

}  // namespace

SequenceExample pack_sequence(const std::vector<FeatureFrame>& frames,
                              const ModelSpec& spec,
                              const std::vector<int8_t>& labels) {
  if (labels.size() != frames.size()) {
    throw LengthMismatch("pack_sequence: labels and frames differ in length");
  }
  if (spec.group_dims != kGroupFeatureDims) {
    throw ConfigError("pack_sequence requires the standard feature dimensions");
  }
  SequenceExample ex;
  const Eigen::Index t_len = static_cast<Eigen::Index>(frames.size());
  for (int g : spec.active_groups()) {
    ex.groups[g].resize(spec.group_dims[g], t_len);
    for (Eigen::Index t = 0; t < t_len; ++t) {
      ex.groups[g].col(t) = group_input(frames[t], g, spec);
    }
  }
  ex.labels = labels;
  ex.loss_mask.assign(frames.size(), 1);
  return ex;
}

Eigen::MatrixXd draw_dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate,
                                  Rng& rng) {
  Eigen::MatrixXd mask(rows, cols);
  const double keep = 1.0 - rate;
  const double scale = 1.0 / keep;
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) {
      mask(i, j) = rng.bernoulli(keep) ? scale : 0.0;
    }
  }
  return mask;
}

void forward_batch_train(const Batch& batch, const ModelParams& params,
                         const Eigen::MatrixXd& dropout_mask, BatchCache& cache) {
  if (batch.empty()) throw InsufficientData("empty batch");
  const ModelSpec& spec = params.spec;
  const std::vector<int> groups = spec.active_groups();

  cache.spans.clear();
  cache.total = 0;
  for (const SequenceExample& ex : batch) {
    if (ex.length() == 0) throw InsufficientData("empty sequence in batch");
    cache.spans.emplace_back(cache.total, ex.length());
    cache.total += ex.length();
  }
  const Eigen::Index n = cache.total;

  cache.labels.clear();
  cache.loss_mask.clear();
  for (const SequenceExample& ex : batch) {
    cache.labels.insert(cache.labels.end(), ex.labels.begin(), ex.labels.end());
    cache.loss_mask.insert(cache.loss_mask.end(), ex.loss_mask.begin(), ex.loss_mask.end());
  }

  const size_t n_groups = groups.size();
  cache.inputs.assign(n_groups, {});
  cache.preact.assign(n_groups, {});
  cache.batch_mean.assign(n_groups, {});
  cache.batch_var.assign(n_groups, {});
  cache.normalized.assign(n_groups, {});
  cache.embedded.assign(n_groups, {});
  cache.concat.resize(spec.input_dim(), n);

  for (size_t gi = 0; gi < n_groups; ++gi) {
    const int g = groups[gi];
    Eigen::MatrixXd& x = cache.inputs[gi];
    x.resize(spec.group_dims[g], n);
    for (size_t b = 0; b < batch.size(); ++b) {
      const Eigen::MatrixXd& src = batch[b].groups[g];
      if (src.rows() != spec.group_dims[g]) {
        throw ConfigError(std::string("group width mismatch for ") +
                          group_name(static_cast<FeatureGroup>(g)));
      }
      x.middleCols(cache.spans[b].first, cache.spans[b].second) = src;
    }

    const EmbedParams& e = params.embeds[gi];
    cache.preact[gi] = e.weight * x;
    const Eigen::MatrixXd& a = cache.preact[gi];
    Eigen::VectorXd mean = a.rowwise().mean();
    Eigen::MatrixXd centered = a.colwise() - mean;
    Eigen::VectorXd var = centered.array().square().rowwise().mean().matrix();
    cache.batch_mean[gi] = mean;
    cache.batch_var[gi] = var;
    const Eigen::ArrayXd inv_std = (var.array() + kBnEpsilon).sqrt().inverse();
    cache.normalized[gi] = (centered.array().colwise() * inv_std).matrix();
    Eigen::ArrayXXd scaled = cache.normalized[gi].array().colwise() * e.gamma.array();
    scaled.colwise() += e.beta.array();
    cache.embedded[gi] = scaled.tanh().matrix();
    if (!cache.embedded[gi].allFinite()) {
      throw NonFinite(std::string("embedding not finite for group ") +
                      group_name(static_cast<FeatureGroup>(g)));
    }
    cache.concat.middleRows(static_cast<Eigen::Index>(gi) * spec.embed_dim,
                            spec.embed_dim) = cache.embedded[gi];
  }

  if (dropout_mask.size() > 0) {
    if (dropout_mask.rows() != cache.concat.rows() ||
        dropout_mask.cols() != cache.concat.cols()) {
      throw ConfigError("dropout mask shape mismatch");
    }
    cache.dropped = cache.concat.cwiseProduct(dropout_mask);
  } else {
    cache.dropped = cache.concat;
  }

  const int h_dim = spec.hidden_dim;
  cache.reset.resize(h_dim, n);
  cache.update.resize(h_dim, n);
  cache.cand.resize(h_dim, n);
  cache.hidden.resize(h_dim, n);
  cache.hidden_prev.resize(h_dim, n);

  // Input-side projections for the whole batch at once.
  const Eigen::MatrixXd rx = params.gru.reset_in * cache.dropped;
  const Eigen::MatrixXd zx = params.gru.update_in * cache.dropped;
  const Eigen::MatrixXd cx = params.gru.cand_in * cache.dropped;

  for (const auto& [off, len] : cache.spans) {
    Eigen::VectorXd h = Eigen::VectorXd::Zero(h_dim);
    for (Eigen::Index t = 0; t < len; ++t) {
      const Eigen::Index col = off + t;
      cache.hidden_prev.col(col) = h;
      const Eigen::ArrayXd r =
          sigmoid(rx.col(col).array() + (params.gru.reset_rec * h).array());
      const Eigen::ArrayXd z =
          sigmoid(zx.col(col).array() + (params.gru.update_rec * h).array());
      const Eigen::ArrayXd c =
          (cx.col(col).array() +
           (params.gru.cand_rec * (r * h.array()).matrix()).array())
              .tanh();
      h = ((1.0 - z) * h.array() + z * c).matrix();
      cache.reset.col(col) = r.matrix();
      cache.update.col(col) = z.matrix();
      cache.cand.col(col) = c.matrix();
      cache.hidden.col(col) = h;
    }
  }
  if (!cache.hidden.allFinite()) throw NonFinite("gru hidden states not finite");

  Eigen::MatrixXd logits =
      (params.classifier_weight * cache.hidden).colwise() + params.classifier_bias;
  cache.probs.resize(spec.n_classes, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double top = logits.col(j).maxCoeff();
    Eigen::ArrayXd e = (logits.col(j).array() - top).exp();
    cache.probs.col(j) = (e / e.sum()).matrix();
  }
  if (!cache.probs.allFinite()) throw NonFinite("class probabilities not finite");
}

void update_running_stats(ModelParams& params, const BatchCache& cache) {
  for (size_t gi = 0; gi < params.embeds.size(); ++gi) {
    EmbedParams& e = params.embeds[gi];
    e.running_mean = kBnMomentum * e.running_mean + (1.0 - kBnMomentum) * cache.batch_mean[gi];
    e.running_var = kBnMomentum * e.running_var + (1.0 - kBnMomentum) * cache.batch_var[gi];
  }
}

std::vector<Probs> forward_sequence(const std::vector<FeatureFrame>& frames,
                                    const ModelParams& params, Mode mode,
                                    Rng* dropout_rng, double dropout_rate) {
  if (frames.empty()) throw InsufficientData("forward_sequence needs length >= 1");
  const ModelSpec& spec = params.spec;

  if (mode == Mode::Infer) {
    std::vector<Probs> out;
    out.reserve(frames.size());
    Eigen::VectorXd h = Eigen::VectorXd::Zero(spec.hidden_dim);
    Eigen::VectorXd concat(spec.input_dim());
    for (size_t t = 0; t < frames.size(); ++t) {
      try {
        Eigen::Index row = 0;
        for (int g : spec.active_groups()) {
          concat.segment(row, spec.embed_dim) = embed_infer(
              params.embeds[params.embed_index(static_cast<FeatureGroup>(g))],
              group_input(frames[t], g, spec));
          row += spec.embed_dim;
        }
        h = gru_step(params.gru, concat, h);
        out.push_back(classify(params, h));
      } catch (const NonFinite& err) {
        throw NonFinite(std::string(err.what()) + " at timestep " + std::to_string(t));
      }
    }
    return out;
  }

  std::vector<int8_t> labels(frames.size(), -1);
  Batch batch{pack_sequence(frames, spec, labels)};
  Eigen::MatrixXd mask;
  if (dropout_rng && dropout_rate > 0.0) {
    mask = draw_dropout_mask(spec.input_dim(),
                             static_cast<Eigen::Index>(frames.size()), dropout_rate,
                             *dropout_rng);
  }
  BatchCache cache;
  forward_batch_train(batch, params, mask, cache);
  std::vector<Probs> out;
  out.reserve(frames.size());
  for (Eigen::Index j = 0; j < cache.total; ++j) {
    out.push_back(Probs{cache.probs(0, j), cache.probs(1, j)});
  }
  return out;
}

StreamState make_stream_state(const ModelSpec& spec) {
  StreamState s;
  s.hidden = Eigen::VectorXd::Zero(spec.hidden_dim);
  s.last = Probs{0.5, 0.5};
  return s;
}

StreamResult stream_step(StreamState& state, const Pose& pose,
                         const ModelParams& params, double conf_threshold) {
  // Carry-forward imputation, mirroring impute_track one frame at a time.
  // The carry advances even when the frame turns out degenerate, exactly as
  // the batch path imputes before dropping frames.
  Pose imputed = pose;
  for (int k = 0; k < kNumKeypoints; ++k) {
    Keypoint& kp = imputed.keypoints[k];
    if (kp.valid(conf_threshold)) {
      state.carry[k] = kp;
      state.carry_valid[k] = true;
    } else if (state.carry_valid[k]) {
      kp.x = state.carry[k].x;
      kp.y = state.carry[k].y;
      kp.confidence = conf_threshold;
    }
  }

  FeatureFrame frame;
  try {
    frame = compute_feature_frame(imputed, conf_threshold,
                                  state.has_prev ? &state.prev_distance : nullptr,
                                  state.has_prev ? &state.prev_angle : nullptr);
  } catch (const DegeneratePose&) {
    return StreamResult{state.last, true};
  }

  const ModelSpec& spec = params.spec;
  Eigen::VectorXd concat(spec.input_dim());
  Eigen::Index row = 0;
  for (int g : spec.active_groups()) {
    concat.segment(row, spec.embed_dim) = embed_infer(
        params.embeds[params.embed_index(static_cast<FeatureGroup>(g))],
        group_input(frame, g, spec));
    row += spec.embed_dim;
  }
  state.hidden = gru_step(params.gru, concat, state.hidden);
  const Probs probs = classify(params, state.hidden);

  for (int i = 0; i < kDistanceStaticDim; ++i) state.prev_distance[i] = frame.distance[i];
  state.prev_angle = frame.angle_static;
  state.has_prev = true;
  state.step += 1;
  state.last = probs;
  return StreamResult{probs, false};
}

std::vector<Probs> infer_track(const ModelParams& params, const Track& track,
                               double conf_threshold) {
  const std::vector<FeatureFrame> frames = extract_track_features(track, conf_threshold);
  std::vector<Probs> frame_probs;
  if (!frames.empty()) {
    frame_probs = forward_sequence(frames, params, Mode::Infer);
  }
  std::vector<Probs> out;
  out.reserve(track.poses.size());
  size_t fi = 0;
  Probs last{0.5, 0.5};
  for (const Pose& pose : track.poses) {
    if (fi < frames.size() && frames[fi].frame_index == pose.frame_index) {
      last = frame_probs[fi];
      ++fi;
    }
    out.push_back(last);
  }
  return out;
}

}  // namespace micromotion
