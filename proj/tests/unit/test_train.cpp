// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mx4sim/errors.hpp"
#include "mx4sim/train.hpp"
#include "property.hpp"

namespace mx4sim {
namespace {

double loss_of(const MlpModel& m, const Batch& b) {
  return mse_loss(forward(m, b.inputs).output, b.targets);
}

// Central differences over every parameter.
void check_finite_differences(Activation act) {
  MlpModel m = MlpModel::init({4, 5, 3}, act, StreamKey{9});
  prop::Gen g(static_cast<std::uint64_t>(act) + 1);
  for (auto& layer : m.layers)
    for (double& b : layer.b) b = g.normal(0.3);
  const Batch batch{g.matrix(6, 4), g.matrix(6, 3)};
  const ForwardResult fwd = forward(m, batch.inputs);
  const auto grads = backward(m, fwd.cache, mse_grad(fwd.output, batch.targets),
                              GemmMode{Rounding::kExact, false, 64}, StreamKey{});
  const double h = 1e-6;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    auto probe = [&](double& param, double analytic) {
      const double keep = param;
      param = keep + h;
      const double up = loss_of(m, batch);
      param = keep - h;
      const double down = loss_of(m, batch);
      param = keep;
      EXPECT_NEAR(analytic, (up - down) / (2 * h), 1e-6) << "layer " << l;
    };
    for (std::size_t i = 0; i < m.layers[l].w.size(); ++i)
      probe(m.layers[l].w.data()[i], grads[l].dw.data()[i]);
    for (std::size_t i = 0; i < m.layers[l].b.size(); ++i)
      probe(m.layers[l].b[i], grads[l].db[i]);
  }
}

TEST(Backward, FiniteDifferencesTanh) { check_finite_differences(Activation::kTanh); }
TEST(Backward, FiniteDifferencesRelu) { check_finite_differences(Activation::kRelu); }

TEST(Backward, SingleLayerHandComputed) {
  MlpModel m;
  m.dims = {2, 2};
  m.layers.push_back(LinearLayer{Matrix{{1, 2}, {3, 4}}, {0.5, -0.5}});
  const Matrix x{{1, -1}};
  const ForwardResult fwd = forward(m, x);
  EXPECT_EQ(fwd.output, (Matrix{{-0.5, -1.5}}));
  const Matrix target(1, 2);
  EXPECT_DOUBLE_EQ(mse_loss(fwd.output, target), 1.25);
  const Matrix dldy = mse_grad(fwd.output, target);
  EXPECT_EQ(dldy, (Matrix{{-0.5, -1.5}}));
  const auto g = backward(m, fwd.cache, dldy, GemmMode{Rounding::kExact, false, 64}, StreamKey{});
  EXPECT_EQ(g[0].dw, (Matrix{{-0.5, 0.5}, {-1.5, 1.5}}));
  EXPECT_EQ(g[0].db, (std::vector<double>{-0.5, -1.5}));
}

TEST(Backward, ShapeErrors) {
  const MlpModel m = MlpModel::init({4, 3}, Activation::kTanh, StreamKey{});
  EXPECT_THROW(forward(m, Matrix(2, 5)), ShapeError);
  EXPECT_THROW(mse_loss(Matrix(2, 3), Matrix(3, 2)), ShapeError);
  EXPECT_THROW(backward(m, ForwardCache{}, Matrix(2, 3), GemmMode{}, StreamKey{}), ShapeError);
  EXPECT_THROW(MlpModel::init({4}, Activation::kTanh, StreamKey{}), std::invalid_argument);
}

TEST(Backward, StochasticTransformedGradientsAreUnbiased) {
  const MlpModel m = MlpModel::init({64, 64, 32}, Activation::kTanh, StreamKey{3});
  prop::Gen g(4);
  const Batch batch{g.matrix(64, 64), g.matrix(64, 32)};
  const ForwardResult fwd = forward(m, batch.inputs);
  const Matrix dldy = mse_grad(fwd.output, batch.targets);
  const auto exact = backward(m, fwd.cache, dldy, GemmMode{Rounding::kExact, false, 64}, StreamKey{});
  const std::size_t n = 400;
  const GemmMode mode = gemm_mode(BackwardMode::kMxfp4RhtSr, 64);
  std::vector<Matrix> sum, sq;
  for (const auto& e : exact) {
    sum.emplace_back(e.dw.rows(), e.dw.cols());
    sq.emplace_back(e.dw.rows(), e.dw.cols());
  }
  for (std::size_t d = 0; d < n; ++d) {
    const auto est = backward(m, fwd.cache, dldy, mode, StreamKey{5, Domain::kDither, {d}});
    for (std::size_t l = 0; l < est.size(); ++l)
      for (std::size_t i = 0; i < est[l].dw.size(); ++i) {
        sum[l].data()[i] += est[l].dw.data()[i];
        sq[l].data()[i] += est[l].dw.data()[i] * est[l].dw.data()[i];
      }
  }
  for (std::size_t l = 0; l < exact.size(); ++l) {
    double worst = 0.0;
    for (std::size_t i = 0; i < exact[l].dw.size(); ++i) {
      const double mean = sum[l].data()[i] / n;
      const double var = (sq[l].data()[i] - n * mean * mean) / (n - 1);
      const double se = std::sqrt(std::max(var, 1e-30) / n);
      worst = std::max(worst, std::abs(mean - exact[l].dw.data()[i]) / se);
    }
    // 6144 entries total; 5.5 sigma keeps the family-wise false alarm rate tiny.
    EXPECT_LT(worst, 5.5) << "layer " << l;
  }
}

TEST(Backward, NearestModeIsDeterministicButBiased) {
  const MlpModel m = MlpModel::init({64, 64, 32}, Activation::kTanh, StreamKey{3});
  prop::Gen g(6);
  const Batch batch{g.matrix(64, 64), g.matrix(64, 32)};
  const ForwardResult fwd = forward(m, batch.inputs);
  const Matrix dldy = mse_grad(fwd.output, batch.targets);
  const GemmMode nearest = gemm_mode(BackwardMode::kMxfp4, 64);
  const auto a = backward(m, fwd.cache, dldy, nearest, StreamKey{1});
  const auto b = backward(m, fwd.cache, dldy, nearest, StreamKey{2});
  const auto exact = backward(m, fwd.cache, dldy, GemmMode{Rounding::kExact, false, 64}, StreamKey{});
  EXPECT_EQ(a[0].dw, b[0].dw);
  EXPECT_GT(max_abs_diff(a[0].dw, exact[0].dw), 0.0);
}

TEST(AdamW, DecayOnlyWhenGradientsVanish) {
  MlpModel m = MlpModel::init({3, 2}, Activation::kTanh, StreamKey{1});
  m.layers[0].b = {1.0, -1.0};
  const Matrix w0 = m.layers[0].w;
  AdamWConfig cfg;
  cfg.weight_decay = 0.5;
  AdamW opt(m, cfg);
  const std::vector<LayerGrad> zero{LayerGrad{Matrix(2, 3), {0.0, 0.0}}};
  for (int i = 0; i < 3; ++i) opt.step(m, zero, 0.1);
  EXPECT_EQ(opt.steps_taken(), 3u);
  for (std::size_t i = 0; i < w0.size(); ++i)
    EXPECT_NEAR(m.layers[0].w.data()[i], w0.data()[i] * std::pow(0.95, 3), 1e-15);
  EXPECT_EQ(m.layers[0].b, (std::vector<double>{1.0, -1.0}));
}

TEST(AdamW, FirstStepMovesBySignedLearningRate) {
  MlpModel m = MlpModel::init({2, 1}, Activation::kTanh, StreamKey{1});
  const Matrix w0 = m.layers[0].w;
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  AdamW opt(m, cfg);
  opt.step(m, std::vector<LayerGrad>{LayerGrad{Matrix{{0.3, -2.0}}, {5.0}}}, 0.01);
  EXPECT_NEAR(m.layers[0].w(0, 0), w0(0, 0) - 0.01, 1e-9);
  EXPECT_NEAR(m.layers[0].w(0, 1), w0(0, 1) + 0.01, 1e-9);
  EXPECT_NEAR(m.layers[0].b[0], -0.01, 1e-9);
  EXPECT_THROW(opt.step(m, std::vector<LayerGrad>{}, 0.01), ShapeError);
}

TEST(AdamW, WarmupSchedule) {
  AdamWConfig cfg;
  cfg.lr = 1.0;
  cfg.warmup_fraction = 0.01;
  EXPECT_DOUBLE_EQ(learning_rate(cfg, 0, 400), 0.25);
  EXPECT_DOUBLE_EQ(learning_rate(cfg, 2, 400), 0.75);
  EXPECT_DOUBLE_EQ(learning_rate(cfg, 3, 400), 1.0);
  EXPECT_DOUBLE_EQ(learning_rate(cfg, 399, 400), 1.0);
  cfg.warmup_fraction = 0.0;
  EXPECT_DOUBLE_EQ(learning_rate(cfg, 0, 400), 1.0);
}

TEST(Task, ZeroInputMapsToOutputBias) {
  const TeacherStudentTask task(4, {256, 64, 32}, Activation::kTanh, 0.0);
  const ForwardResult r = forward(task.teacher(), Matrix(1, 256));
  for (std::size_t i = 0; i < 32; ++i) EXPECT_EQ(r.output(0, i), task.teacher().layers.back().b[i]);
}

TEST(Task, BatchesAreDeterministicAndIndexed) {
  const TeacherStudentTask task(4, {256, 64, 32}, Activation::kTanh, TaskNoise{0.05, 0.03, 10});
  EXPECT_EQ(task.batch(3, 8).targets, task.batch(3, 8).targets);
  EXPECT_NE(task.batch(3, 8).inputs, task.batch(4, 8).inputs);
  EXPECT_EQ(task.batch(3, 8).inputs, task.clean_batch(3, 8).inputs);
  const Batch via_key = teacher_student_task(StreamKey{4, Domain::kData, {3}}, 8, 256);
  EXPECT_EQ(via_key.inputs, task.batch(3, 8).inputs);
}

TEST(Task, NoiseModel) {
  const TeacherStudentTask gaussian(1, {64, 32}, Activation::kTanh, 0.1);
  const Batch a = gaussian.batch(0, 2000), clean = gaussian.clean_batch(0, 2000);
  double ss = 0.0;
  for (std::size_t i = 0; i < a.targets.size(); ++i) {
    const double d = a.targets.data()[i] - clean.targets.data()[i];
    ss += d * d;
  }
  EXPECT_NEAR(std::sqrt(ss / a.targets.size()), 0.1, 0.002);

  const TeacherStudentTask spikes(1, {64, 32}, Activation::kTanh, TaskNoise{0.0, 0.1, 5.0});
  const Batch s = spikes.batch(0, 2000);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < s.targets.size(); ++i) hit += s.targets.data()[i] != clean.targets.data()[i];
  EXPECT_NEAR(static_cast<double>(hit) / s.targets.size(), 0.1, 0.005);
}

TEST(Task, TargetScaleIsStableAcrossSeeds) {
  std::vector<double> vars;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const TeacherStudentTask task(seed, {256, 64, 32}, Activation::kTanh, 0.0);
    const Batch b = task.clean_batch(0, 1024);
    double v = 0.0;
    for (std::size_t c = 0; c < 32; ++c) {
      double m = 0.0, s = 0.0;
      for (std::size_t r = 0; r < 1024; ++r) m += b.targets(r, c);
      m /= 1024;
      for (std::size_t r = 0; r < 1024; ++r) s += (b.targets(r, c) - m) * (b.targets(r, c) - m);
      v += s / 1023;
    }
    vars.push_back(v / 32);
  }
  const double mean = std::accumulate(vars.begin(), vars.end(), 0.0) / vars.size();
  for (double v : vars) EXPECT_NEAR(v / mean, 1.0, 0.2);
}

TEST(TrainConfigTest, Validation) {
  EXPECT_NO_THROW(TrainConfig{}.validate());
  auto bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), std::invalid_argument);
  };
  bad([](TrainConfig& c) { c.dims = {256, 32}; c.teacher_dims = {128, 32}; });
  bad([](TrainConfig& c) { c.dims = {256, 100, 32}; });
  bad([](TrainConfig& c) { c.batch = 48; });
  bad([](TrainConfig& c) { c.steps = 0; });
  bad([](TrainConfig& c) { c.noise.outlier_prob = 1.5; });
  bad([](TrainConfig& c) { c.noise.label_sd = -1; });
  bad([](TrainConfig& c) { c.rht_g = 48; });
  TrainConfig exact;
  exact.backward_mode = BackwardMode::kExact;
  exact.dims = {256, 100, 32};
  exact.batch = 10;
  EXPECT_NO_THROW(exact.validate());
}

TEST(TrainConfigTest, CanonicalTextAndHash) {
  const TrainConfig a;
  EXPECT_EQ(config_hash(a), config_hash(TrainConfig{}));
  EXPECT_EQ(config_hash(a).size(), 40u);
  TrainConfig b;
  b.optim.lr = 2e-3;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_NE(canonical_config(a).find("backward_mode=MXFP4_RHT_SR\n"), std::string::npos);
  EXPECT_NE(canonical_config(a).find("noise.outlier_sd=10\n"), std::string::npos);
}

TEST(TrainConfigTest, NameRoundTrips) {
  for (BackwardMode m : kAllBackwardModes) EXPECT_EQ(parse_backward_mode(to_string(m)), m);
  EXPECT_FALSE(parse_backward_mode("FP8").has_value());
  EXPECT_EQ(parse_activation("relu"), Activation::kRelu);
  EXPECT_FALSE(parse_activation("gelu").has_value());
  EXPECT_EQ(gemm_mode(BackwardMode::kMxfp4Rht, 128),
            (GemmMode{Rounding::kNearest, true, 128}));
}

TrainConfig tiny(BackwardMode mode) {
  TrainConfig c;
  c.backward_mode = mode;
  c.dims = {64, 64, 32};
  c.teacher_dims = {64, 32, 32};
  c.steps = 20;
  c.batch = 64;
  c.eval_batch = 128;
  c.seed = 11;
  return c;
}

TEST(TrainRun, ReproducibleAndModeIndependentStart) {
  const RunRecord a = train_run(tiny(BackwardMode::kMxfp4RhtSr));
  const RunRecord b = train_run(tiny(BackwardMode::kMxfp4RhtSr));
  EXPECT_EQ(a.losses, b.losses);
  EXPECT_EQ(a.final_eval_loss, b.final_eval_loss);
  ASSERT_EQ(a.losses.size(), 20u);
  const RunRecord e = train_run(tiny(BackwardMode::kExact));
  EXPECT_EQ(a.initial_eval_loss, e.initial_eval_loss);
  EXPECT_EQ(a.losses.front(), e.losses.front());
  EXPECT_NE(a.config_hash, e.config_hash);
  EXPECT_FALSE(a.failed);
}

TEST(TrainRun, NonFiniteLossMarksFailure) {
  TrainConfig c = tiny(BackwardMode::kExact);
  c.noise = TaskNoise{0.0, 1.0, 1e308};
  const RunRecord r = train_run(c);
  EXPECT_TRUE(r.failed);
  EXPECT_EQ(r.losses.size(), 1u);
  EXPECT_FALSE(r.failure.empty());
}

TEST(TrainRun, ExactBackwardLearnsTheTeacher) {
  TrainConfig c;
  c.backward_mode = BackwardMode::kExact;
  const RunRecord r = train_run(c);
  ASSERT_FALSE(r.failed);
  EXPECT_LT(r.final_eval_loss, 0.1 * r.initial_eval_loss)
      << r.initial_eval_loss << " -> " << r.final_eval_loss;
  // Report only: how early the loss settles within 10% of its final level.
  std::size_t settle = r.losses.size();
  while (settle > 0 && r.losses[settle - 1] < 1.1 * r.losses.back() + 0.05) --settle;
  RecordProperty("settle_step", static_cast<int>(settle));
}

}  // namespace
}  // namespace mx4sim
