// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <numeric>

#include "mx4sim/variancelab.hpp"
#include "property.hpp"

namespace mx4sim {
namespace {

double sample_variance(const std::vector<double>& v) {
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / (v.size() - 1);
}

// Variance of the corrected dot product when every element rounds
// independently: sum_i (mu_a^2 + v_a)(mu_b^2 + v_b) - mu_a^2 mu_b^2.
double independent_rounding_variance(const SrOperand& a, const SrOperand& b) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.lo.size(); ++i) {
    auto moments = [](const SrOperand& o, std::size_t k, double& mu, double& var) {
      mu = o.lo[k] + o.p_up[k] * (o.hi[k] - o.lo[k]);
      var = o.p_up[k] * (1 - o.p_up[k]) * (o.hi[k] - o.lo[k]) * (o.hi[k] - o.lo[k]);
    };
    double ma, va, mb, vb;
    moments(a, i, ma, va);
    moments(b, i, mb, vb);
    total += (ma * ma + va) * (mb * mb + vb) - ma * ma * mb * mb;
  }
  return total * (16.0 / 9.0) * (16.0 / 9.0);
}

TEST(SampleOperand, ComponentVariances) {
  const auto clean = sample_operand(200000, 0.0, StreamKey{1});
  EXPECT_NEAR(sample_variance(clean), 1.0, 0.02);
  const auto all = sample_operand(200000, 1.0, StreamKey{2});
  EXPECT_NEAR(sample_variance(all), 6.0, 0.12);
  const auto some = sample_operand(200000, 0.05, StreamKey{3}, 9.0);
  EXPECT_NEAR(sample_variance(some), 1.45, 0.06);
  EXPECT_EQ(sample_operand(64, 0.01, StreamKey{4}), sample_operand(64, 0.01, StreamKey{4}));
}

TEST(SrVarianceOracle, Examples) {
  const QuantGrid& g = QuantGrid::fp4();
  EXPECT_DOUBLE_EQ(sr_variance_oracle(2.5, g), 0.25);
  EXPECT_DOUBLE_EQ(sr_variance_oracle(2.25, g), 0.1875);
  EXPECT_DOUBLE_EQ(sr_variance_oracle(-5.0, g), 1.0);
  EXPECT_EQ(sr_variance_oracle(4.0, g), 0.0);
  EXPECT_THROW(sr_variance_oracle(6.5, g), std::overflow_error);
}

TEST(PrepareSrOperand, MeanIsThreeQuartersOfInput) {
  prop::for_all(30, 41, [](prop::Gen& g, std::size_t) {
    const auto v = g.with_outliers(128, 0.05, 30.0);
    const std::size_t group = g.coin() ? 32 : 0;
    const SrOperand op = prepare_sr_operand(v, group);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double mean = op.lo[i] + op.p_up[i] * (op.hi[i] - op.lo[i]);
      ASSERT_NEAR(mean, 0.75 * v[i], 1e-12 * (1 + std::abs(v[i])));
      ASSERT_GE(op.p_up[i], 0.0);
      ASSERT_LE(op.p_up[i], 1.0);
    }
  });
  EXPECT_THROW(prepare_sr_operand(std::vector<double>(64), 48), std::invalid_argument);
}

TEST(PairVariance, PlainMatchesIndependentRoundingFormula) {
  VarianceSweepConfig cfg;
  cfg.inner_draws = 4000;
  for (std::size_t b : {32u, 256u}) {
    const auto x = sample_operand(b, 0.0, StreamKey{10, Domain::kData, {b, 0, 0, 0}});
    const auto y = sample_operand(b, 0.0, StreamKey{10, Domain::kData, {b, 1, 0, 0}});
    const double oracle =
        independent_rounding_variance(prepare_sr_operand(x, 0), prepare_sr_operand(y, 0));
    const double got = pair_variance(x, y, cfg, StreamKey{b}).plain;
    // Relative sd of a variance estimate over n draws is about sqrt(2/n).
    EXPECT_NEAR(got / oracle, 1.0, 0.12) << "b=" << b;
  }
  EXPECT_THROW(pair_variance(std::vector<double>(32), std::vector<double>(64), cfg, StreamKey{}),
               std::invalid_argument);
}

TEST(Bootstrap, IntervalProperties) {
  const std::vector<double> flat(50, 2.0);
  const ConfidenceInterval c = bootstrap_mean_ci(flat, 200, 0.95, StreamKey{});
  EXPECT_EQ(c.low, 2.0);
  EXPECT_EQ(c.high, 2.0);
  prop::Gen g(5);
  const auto v = g.normals(400);
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  const ConfidenceInterval ci = bootstrap_mean_ci(v, 2000, 0.95, StreamKey{7});
  EXPECT_LT(ci.low, mean);
  EXPECT_GT(ci.high, mean);
  // Width close to 2 * 1.96 / sqrt(n).
  EXPECT_NEAR(ci.high - ci.low, 2 * 1.96 / 20.0, 0.04);
  const ConfidenceInterval narrow = bootstrap_mean_ci(v, 2000, 0.5, StreamKey{7});
  EXPECT_LT(narrow.high - narrow.low, ci.high - ci.low);
}

TEST(LogLogSlope, RecoversPowerLaw) {
  const std::vector<double> x = {32, 64, 128, 256};
  std::vector<double> y;
  for (double v : x) y.push_back(3.0 * std::pow(v, 1.5));
  EXPECT_NEAR(loglog_slope(x, y), 1.5, 1e-12);
  EXPECT_THROW(loglog_slope(std::vector<double>{1.0}, std::vector<double>{1.0}),
               std::invalid_argument);
}

TEST(SweepConfig, Validation) {
  EXPECT_NO_THROW(VarianceSweepConfig{}.validate());
  auto bad = [](auto mutate) {
    VarianceSweepConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), std::invalid_argument);
  };
  bad([](VarianceSweepConfig& c) { c.block_sizes = {48}; });
  bad([](VarianceSweepConfig& c) { c.block_sizes.clear(); });
  bad([](VarianceSweepConfig& c) { c.outlier_props = {1.0}; });
  bad([](VarianceSweepConfig& c) { c.group_size = 48; });
  bad([](VarianceSweepConfig& c) { c.block_sizes = {96}; });
  bad([](VarianceSweepConfig& c) { c.rht_g = 128; c.block_sizes = {64}; });
  bad([](VarianceSweepConfig& c) { c.n_samples = 1; });
  bad([](VarianceSweepConfig& c) { c.ci_level = 1.0; });
  bad([](VarianceSweepConfig& c) { c.outlier_scale = -1.0; });
}

VarianceSweepConfig small_sweep() {
  VarianceSweepConfig c;
  c.block_sizes = {64, 256};
  c.outlier_props = {0.0, 0.01};
  c.n_samples = 48;
  c.inner_draws = 16;
  c.bootstrap_resamples = 200;
  c.seed = 3;
  return c;
}

TEST(RunSweep, RowLayoutAndIntervals) {
  const auto rows = run_sweep(small_sweep());
  ASSERT_EQ(rows.size(), 8u);
  std::size_t i = 0;
  for (std::size_t b : {64u, 256u})
    for (double p : {0.0, 0.01})
      for (const char* mode : {"plain", "rht"}) {
        const SweepRow& r = rows[i++];
        EXPECT_EQ(r.b, b);
        EXPECT_EQ(r.p, p);
        EXPECT_EQ(r.mode, mode);
        EXPECT_LE(r.ci_low, r.mean_variance);
        EXPECT_GE(r.ci_high, r.mean_variance);
        EXPECT_GT(r.mean_variance, 0.0);
        EXPECT_EQ(r.n_samples, 48u);
        EXPECT_EQ(r.inner_draws, 16u);
        EXPECT_EQ(r.seed, 3u);
      }
}

TEST(RunSweep, DeterministicAcrossThreadCounts) {
  setenv("MX4SIM_THREADS", "1", 1);
  const auto one = run_sweep(small_sweep());
  setenv("MX4SIM_THREADS", "8", 1);
  const auto eight = run_sweep(small_sweep());
  unsetenv("MX4SIM_THREADS");
  ASSERT_EQ(one.size(), eight.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    EXPECT_EQ(one[i].mean_variance, eight[i].mean_variance);
    EXPECT_EQ(one[i].ci_low, eight[i].ci_low);
  }
}

TEST(RunSweep, PlainVarianceGrowsWithLength) {
  VarianceSweepConfig c = small_sweep();
  c.block_sizes = {32, 128, 512};
  c.outlier_props = {0.0};
  c.n_samples = 96;
  std::vector<double> bs, plain;
  for (const auto& r : run_sweep(c)) {
    if (r.mode != "plain") continue;
    bs.push_back(static_cast<double>(r.b));
    plain.push_back(r.mean_variance);
  }
  EXPECT_LT(plain[0], plain[1]);
  EXPECT_LT(plain[1], plain[2]);
  EXPECT_NEAR(loglog_slope(bs, plain), 1.0, 0.35);
}

TEST(RunSweep, TransformReducesVarianceWithOutliersAtLargeLength) {
  VarianceSweepConfig c;
  c.block_sizes = {2048};
  c.outlier_props = {0.01};
  c.n_samples = 128;
  c.inner_draws = 32;
  c.bootstrap_resamples = 200;
  const auto rows = run_sweep(c);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_LT(rows[1].mean_variance, rows[0].mean_variance);
}

}  // namespace
}  // namespace mx4sim
