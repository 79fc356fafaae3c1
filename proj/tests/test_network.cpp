#include <cmath>

#include "doctest.h"
#include "micromotion/network.hpp"
#include "micromotion/synthgait.hpp"

using namespace micromotion;

namespace {

EmbedParams scalar_embed(double w, double gamma, double beta, double mean, double var) {
  EmbedParams e;
  e.weight = Eigen::MatrixXd::Constant(1, 1, w);
  e.gamma = Eigen::VectorXd::Constant(1, gamma);
  e.beta = Eigen::VectorXd::Constant(1, beta);
  e.running_mean = Eigen::VectorXd::Constant(1, mean);
  e.running_var = Eigen::VectorXd::Constant(1, var);
  return e;
}

GruParams scalar_gru(double w) {
  GruParams g;
  g.reset_in = g.update_in = g.cand_in = Eigen::MatrixXd::Constant(1, 1, w);
  g.reset_rec = g.update_rec = g.cand_rec = Eigen::MatrixXd::Constant(1, 1, w);
  return g;
}

std::vector<FeatureFrame> random_frames(int n, Rng& rng) {
  std::vector<FeatureFrame> out(n);
  for (int t = 0; t < n; ++t) {
    out[t].frame_index = t;
    for (double& v : out[t].position) v = rng.uniform(-1.0, 1.0);
    for (double& v : out[t].distance) v = rng.uniform(-1.0, 1.0);
    for (double& v : out[t].angle_static) v = rng.uniform(-1.0, 1.0);
    for (double& v : out[t].angle_dynamic) v = rng.uniform(-1.0, 1.0);
  }
  return out;
}

}  // namespace

TEST_CASE("embedding with zero weights produces zeros") {
  EmbedParams e;
  e.weight = Eigen::MatrixXd::Zero(16, 24);
  e.gamma = Eigen::VectorXd::Ones(16);
  e.beta = Eigen::VectorXd::Zero(16);
  e.running_mean = Eigen::VectorXd::Zero(16);
  e.running_var = Eigen::VectorXd::Ones(16);
  Rng rng(41);
  Eigen::VectorXd input(24);
  for (int i = 0; i < 24; ++i) input[i] = rng.uniform(-2.0, 2.0);
  const Eigen::VectorXd out = embed_infer(e, input);
  for (int i = 0; i < 16; ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("embedding scalar slices match hand computation") {
  // identity batch norm
  const Eigen::VectorXd one = Eigen::VectorXd::Constant(1, 2.0);
  const Eigen::VectorXd a = embed_infer(scalar_embed(1.0, 1.0, 0.0, 0.0, 1.0), one);
  CHECK(a[0] == doctest::Approx(std::tanh(2.0 / std::sqrt(1.0 + kBnEpsilon)))
                    .epsilon(1e-14));
  CHECK(a[0] == doctest::Approx(0.96402).epsilon(1e-5));

  // shifted and scaled batch norm; the library's epsilon is fixed at 1e-5
  const Eigen::VectorXd three = Eigen::VectorXd::Constant(1, 3.0);
  const Eigen::VectorXd b = embed_infer(scalar_embed(1.0, 2.0, 0.5, 1.0, 4.0), three);
  const double expected = std::tanh(2.0 * (3.0 - 1.0) / std::sqrt(4.0 + kBnEpsilon) + 0.5);
  CHECK(b[0] == doctest::Approx(expected).epsilon(1e-14));
  CHECK(b[0] == doctest::Approx(0.98661).epsilon(1e-5));
}

TEST_CASE("gru zero input and state is a fixed point") {
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(1);
  const Eigen::VectorXd h = gru_step(scalar_gru(1.0), zero, zero);
  CHECK(h[0] == 0.0);
}

TEST_CASE("gru scalar step matches the recurrence equations") {
  const Eigen::VectorXd input = Eigen::VectorXd::Constant(1, 1.0);
  const Eigen::VectorXd h_prev = Eigen::VectorXd::Constant(1, 0.5);
  const Eigen::VectorXd h = gru_step(scalar_gru(1.0), input, h_prev);

  // Independent scalar evaluation.
  const double gate = 1.0 / (1.0 + std::exp(-1.5));
  const double cand = std::tanh(1.0 + gate * 0.5);
  const double expected = (1.0 - gate) * 0.5 + gate * cand;
  CHECK(h[0] == doctest::Approx(expected).epsilon(1e-15));
  CHECK(h[0] == doctest::Approx(0.81659453185620123).epsilon(1e-12));
}

TEST_CASE("gru keeps hidden components inside the unit interval") {
  Rng rng(42);
  const int dim = 8;
  auto rand_mat = [&](double span) {
    Eigen::MatrixXd m(dim, dim);
    for (int j = 0; j < dim; ++j)
      for (int i = 0; i < dim; ++i) m(i, j) = rng.uniform(-span, span);
    return m;
  };
  auto make_gru = [&](double span) {
    GruParams g;
    g.reset_in = rand_mat(span);
    g.update_in = rand_mat(span);
    g.cand_in = rand_mat(span);
    g.reset_rec = rand_mat(span);
    g.update_rec = rand_mat(span);
    g.cand_rec = rand_mat(span);
    return g;
  };

  for (int trial = 0; trial < 100; ++trial) {
    // Moderate weights keep the convex combination strictly interior.
    const GruParams g = make_gru(0.5);
    Eigen::VectorXd x(dim), h(dim);
    for (int i = 0; i < dim; ++i) {
      x[i] = rng.uniform(-1.0, 1.0);
      h[i] = rng.uniform(-0.999, 0.999);
    }
    const Eigen::VectorXd h_next = gru_step(g, x, h);
    for (int i = 0; i < dim; ++i) CHECK(std::abs(h_next[i]) < 1.0);

    // Extreme weights saturate tanh to exactly 1.0 in doubles, so the
    // closed bound is what survives floating point.
    const GruParams wild = make_gru(50.0);
    Eigen::VectorXd xw(dim);
    for (int i = 0; i < dim; ++i) xw[i] = rng.uniform(-5.0, 5.0);
    const Eigen::VectorXd h_wild = gru_step(wild, xw, h);
    for (int i = 0; i < dim; ++i) CHECK(std::abs(h_wild[i]) <= 1.0);
  }
}

TEST_CASE("classifier softmax") {
  ModelSpec spec;
  ModelParams p = init_params(spec, 1);
  p.classifier_weight.setZero();

  p.classifier_bias << 0.0, 0.0;
  Eigen::VectorXd h = Eigen::VectorXd::Zero(spec.hidden_dim);
  Probs probs = classify(p, h);
  CHECK(probs.walking == 0.5);
  CHECK(probs.standing == 0.5);

  p.classifier_bias << std::log(3.0), 0.0;
  probs = classify(p, h);
  CHECK(probs.walking == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(probs.standing == doctest::Approx(0.25).epsilon(1e-12));

  p.classifier_bias << 1000.0, 0.0;
  probs = classify(p, h);
  CHECK(probs.walking == 1.0);
  CHECK(std::isfinite(probs.standing));
  CHECK(probs.standing >= 0.0);
}

TEST_CASE("forward_sequence with a zero classifier is uniform") {
  Rng rng(43);
  ModelParams p = init_params(ModelSpec{}, 2);
  p.classifier_weight.setZero();
  p.classifier_bias.setZero();
  const auto frames = random_frames(7, rng);
  for (const Probs& probs : forward_sequence(frames, p, Mode::Infer)) {
    CHECK(probs.walking == 0.5);
    CHECK(probs.standing == 0.5);
  }
}

TEST_CASE("forward_sequence emits one normalized distribution per step") {
  Rng rng(44);
  const ModelParams p = init_params(ModelSpec{}, 3);
  const auto frames = random_frames(11, rng);

  const auto infer = forward_sequence(frames, p, Mode::Infer);
  REQUIRE(infer.size() == frames.size());
  for (const Probs& probs : infer) {
    CHECK(std::abs(probs.walking + probs.standing - 1.0) <= 1e-9);
    CHECK(probs.walking >= 0.0);
    CHECK(probs.walking <= 1.0);
  }

  Rng drop(45);
  const auto trained = forward_sequence(frames, p, Mode::Train, &drop, 0.5);
  REQUIRE(trained.size() == frames.size());
  for (const Probs& probs : trained) {
    CHECK(std::abs(probs.walking + probs.standing - 1.0) <= 1e-9);
  }
}

TEST_CASE("streaming composition reproduces the batch forward pass") {
  GaitConfig cfg;
  cfg.schedule = {{MotionLabel::Walking, 40}, {MotionLabel::Standing, 30}};
  const Track track = generate_track(cfg, 77, "s");
  const ModelParams params = init_params(ModelSpec{}, 9);

  const std::vector<Probs> batch = infer_track(params, track, 0.3);
  StreamState state = make_stream_state(params.spec);
  REQUIRE(batch.size() == track.poses.size());
  for (size_t i = 0; i < track.poses.size(); ++i) {
    const StreamResult res = stream_step(state, track.poses[i], params, 0.3);
    CHECK_FALSE(res.stale);
    CHECK(std::abs(res.probs.walking - batch[i].walking) <= 1e-6);
  }
}

TEST_CASE("stream_step leaves state untouched on degenerate frames") {
  const ModelParams params = init_params(ModelSpec{}, 10);
  GaitConfig cfg;
  cfg.schedule = {{MotionLabel::Walking, 5}};
  const Track track = generate_track(cfg, 5, "s");

  StreamState state = make_stream_state(params.spec);
  SUBCASE("fresh state yields a stale uniform result") {
    Pose dead;
    const StreamResult res = stream_step(state, dead, params, 0.3);
    CHECK(res.stale);
    CHECK(res.probs.walking == 0.5);
    CHECK(state.step == 0);
  }
  SUBCASE("repeated degenerate frames repeat the last probabilities") {
    // A single valid keypoint never yields a bounding box, and the carry
    // cannot revive the rest, so the stream stays stale.
    Pose sparse;
    sparse.keypoints[kNose] = {100.0, 100.0, 1.0};
    const StreamResult r1 = stream_step(state, sparse, params, 0.3);
    Pose sparse2;
    sparse2.keypoints[kNose] = {120.0, 104.0, 1.0};
    const StreamResult r2 = stream_step(state, sparse2, params, 0.3);
    CHECK(r1.stale);
    CHECK(r2.stale);
    CHECK(r2.probs.walking == r1.probs.walking);
    CHECK(state.step == 0);
    CHECK(state.hidden.isZero());
  }
  SUBCASE("a dead frame after a real step revives via the imputation carry") {
    // The batch path imputes before extraction, so for equivalence the
    // stream must do the same: the all-invalid frame copies the previous
    // one instead of going stale.
    Track t;
    t.track_id = "revive";
    Pose dead;
    dead.frame_index = 1;
    t.poses = {track.poses[0], dead};
    const std::vector<Probs> batch = infer_track(params, t, 0.3);

    const StreamResult first = stream_step(state, t.poses[0], params, 0.3);
    const StreamResult second = stream_step(state, t.poses[1], params, 0.3);
    CHECK_FALSE(first.stale);
    CHECK_FALSE(second.stale);
    CHECK(first.probs.walking == batch[0].walking);
    CHECK(second.probs.walking == batch[1].walking);
    CHECK(state.step == 2);
  }
}

TEST_CASE("init_params is deterministic with the documented layout") {
  ModelSpec spec;
  ModelParams a = init_params(spec, 123);
  ModelParams b = init_params(spec, 123);
  const auto ta = all_tensors(a);
  const auto tb = all_tensors(b);
  REQUIRE(ta.size() == tb.size());
  for (size_t i = 0; i < ta.size(); ++i) {
    REQUIRE(ta[i].size() == tb[i].size());
    for (Eigen::Index k = 0; k < ta[i].size(); ++k) {
      CHECK(ta[i].data[k] == tb[i].data[k]);
    }
  }

  for (const EmbedParams& e : a.embeds) {
    for (int i = 0; i < e.gamma.size(); ++i) {
      CHECK(e.gamma[i] == 1.0);
      CHECK(e.beta[i] == 0.0);
      CHECK(e.running_mean[i] == 0.0);
      CHECK(e.running_var[i] == 1.0);
    }
    const double bound = std::sqrt(6.0 / (e.weight.rows() + e.weight.cols()));
    CHECK(e.weight.cwiseAbs().maxCoeff() <= bound);
  }
  const double gru_bound = std::sqrt(6.0 / (64.0 + 64.0));
  CHECK(a.gru.cand_rec.cwiseAbs().maxCoeff() <= gru_bound);
  CHECK(a.classifier_bias.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("averaged dropout recovers the undropped representation") {
  Rng rng(46);
  const ModelParams p = init_params(ModelSpec{}, 11);
  const auto frames = random_frames(5, rng);
  std::vector<int8_t> labels(frames.size(), -1);
  Batch batch{pack_sequence(frames, p.spec, labels)};
  BatchCache cache;
  forward_batch_train(batch, p, Eigen::MatrixXd{}, cache);
  const Eigen::MatrixXd undropped = cache.concat;

  const int draws = 20000;
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(undropped.rows(), undropped.cols());
  Rng drop(47);
  for (int d = 0; d < draws; ++d) {
    mean += undropped.cwiseProduct(
        draw_dropout_mask(undropped.rows(), undropped.cols(), 0.5, drop));
  }
  mean /= static_cast<double>(draws);

  // Inverted dropout at keep 0.5 has per-entry standard deviation |I|, so
  // the standard error of the mean is |I| / sqrt(draws). With 320 entries a
  // handful of 3-sigma excursions are expected; none may stray past 6.
  int violations = 0;
  for (Eigen::Index j = 0; j < undropped.cols(); ++j) {
    for (Eigen::Index i = 0; i < undropped.rows(); ++i) {
      const double se = std::abs(undropped(i, j)) / std::sqrt(static_cast<double>(draws));
      const double err = std::abs(mean(i, j) - undropped(i, j));
      if (err > 3.0 * se + 1e-12) ++violations;
      CHECK(err <= 6.0 * se + 1e-12);
    }
  }
  CHECK(violations <= (undropped.size() + 49) / 50);  // 2% allowance
}
