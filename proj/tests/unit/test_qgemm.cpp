// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>

#include "mx4sim/errors.hpp"
#include "mx4sim/qgemm.hpp"
#include "mx4sim/variancelab.hpp"
#include "property.hpp"

namespace mx4sim {
namespace {

Matrix triple_loop(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      c(i, j) = acc;
    }
  return c;
}

const double kGrid[] = {-6, -4, -3, -2, -1.5, -1, -0.5, 0, 0.5, 1, 1.5, 2, 3, 4, 6};

// Matrix whose entries are FP4 grid values and whose every 32-group along
// the reduction axis contains a 6 (so the shared scale is exactly 1).
Matrix grid_matrix(prop::Gen& g, std::size_t r, std::size_t c, bool groups_on_rows) {
  Matrix m(r, c);
  for (double& v : m.data()) v = kGrid[g.index(std::size(kGrid))];
  if (groups_on_rows) {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; j += 32) m(i, j) = 6.0;
  } else {
    for (std::size_t i = 0; i < r; i += 32)
      for (std::size_t j = 0; j < c; ++j) m(i, j) = 6.0;
  }
  return m;
}

struct MeanSd {
  Matrix mean;
  Matrix sd;
};

MeanSd draw_stats(const Matrix& a, const Matrix& b, const GemmMode& mode, std::size_t n,
                  bool raw) {
  Matrix sum(a.rows(), b.cols()), sq(a.rows(), b.cols());
  for (std::size_t d = 0; d < n; ++d) {
    const StreamKey key{77, Domain::kDither, {d, 0, 0, 0}};
    const Matrix e = raw ? mxfp4_gemm(a, b, mode, key) : estimate_gemm(a, b, mode, GemmKeys::from(key));
    for (std::size_t i = 0; i < e.size(); ++i) {
      sum.data()[i] += e.data()[i];
      sq.data()[i] += e.data()[i] * e.data()[i];
    }
  }
  MeanSd out{Matrix(a.rows(), b.cols()), Matrix(a.rows(), b.cols())};
  for (std::size_t i = 0; i < sum.size(); ++i) {
    const double m = sum.data()[i] / n;
    out.mean.data()[i] = m;
    out.sd.data()[i] = std::sqrt(std::max(0.0, (sq.data()[i] - n * m * m) / (n - 1)));
  }
  return out;
}

double max_z(const MeanSd& s, const Matrix& target, std::size_t n) {
  double z = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double se = s.sd.data()[i] / std::sqrt(static_cast<double>(n));
    const double diff = std::abs(s.mean.data()[i] - target.data()[i]);
    z = std::max(z, se > 0 ? diff / se : (diff > 1e-9 ? 1e9 : 0.0));
  }
  return z;
}

TEST(ExactGemm, MatchesTripleLoop) {
  prop::for_all(10, 31, [](prop::Gen& g, std::size_t) {
    const std::size_t m = 1 + g.index(20), k = 1 + g.index(40), n = 1 + g.index(20);
    const Matrix a = g.matrix(m, k), b = g.matrix(k, n);
    ASSERT_LT(max_abs_diff(exact_gemm(a, b), triple_loop(a, b)), 1e-12);
  });
  EXPECT_THROW(exact_gemm(Matrix(2, 3), Matrix(4, 2)), ShapeError);
}

TEST(MxGemm, NearestIsExactOnGridOperands) {
  prop::Gen g(1);
  const Matrix a = grid_matrix(g, 8, 64, true);
  const Matrix b = grid_matrix(g, 64, 8, false);
  const GemmMode nearest{Rounding::kNearest, false, 64};
  EXPECT_EQ(mxfp4_gemm(a, b, nearest, StreamKey{}), triple_loop(a, b));
}

TEST(MxGemm, ZeroOperandGivesZero) {
  prop::Gen g(2);
  const Matrix b = g.matrix(64, 4);
  for (Rounding r : {Rounding::kNearest, Rounding::kStochastic}) {
    for (bool rht : {false, true}) {
      const Matrix c = estimate_gemm(Matrix(4, 64), b, GemmMode{r, rht, 64}, GemmKeys{});
      EXPECT_EQ(max_abs(c), 0.0);
    }
  }
}

TEST(MxGemm, ShapeAndValueErrors) {
  const GemmMode sr{};
  EXPECT_THROW(mxfp4_gemm(Matrix(2, 48), Matrix(48, 2), sr, StreamKey{}), ShapeError);
  EXPECT_THROW(mxfp4_gemm(Matrix(2, 64), Matrix(32, 2), sr, StreamKey{}), ShapeError);
  Matrix bad(2, 32);
  bad(0, 3) = std::nan("");
  EXPECT_THROW(mxfp4_gemm(bad, Matrix(32, 2), sr, StreamKey{}), std::invalid_argument);
  EXPECT_THROW(estimate_gemm(Matrix(2, 96), Matrix(96, 2), GemmMode{Rounding::kStochastic, true, 64},
                             GemmKeys{}),
               ShapeError);
}

TEST(MxGemm, RawStochasticMeanIsNineSixteenths) {
  prop::Gen g(3);
  const Matrix a = g.matrix(4, 64), b = g.matrix(64, 4);
  const std::size_t n = 2000;
  const MeanSd s = draw_stats(a, b, GemmMode{Rounding::kStochastic, false, 64}, n, true);
  EXPECT_LT(max_z(s, (9.0 / 16.0) * triple_loop(a, b), n), 4.5);
}

TEST(MxGemm, CorrectedEstimateIsUnbiased) {
  prop::Gen g(4);
  const Matrix a = g.matrix(4, 128), b = g.matrix(128, 4);
  const std::size_t n = 1000;
  for (bool rht : {false, true}) {
    const MeanSd s = draw_stats(a, b, GemmMode{Rounding::kStochastic, rht, 64}, n, false);
    EXPECT_LT(max_z(s, triple_loop(a, b), n), 4.5) << "rht=" << rht;
  }
}

TEST(MxGemm, CorrectionFactor) {
  EXPECT_DOUBLE_EQ(sr_correction(), 16.0 / 9.0);
  {
    testing::ScopedCorrectionOverride o(1.0);
    EXPECT_EQ(sr_correction(), 1.0);
  }
  EXPECT_DOUBLE_EQ(sr_correction(), 16.0 / 9.0);
}

TEST(MxGemm, ExactModeIgnoresRht) {
  prop::Gen g(5);
  const Matrix a = g.matrix(8, 128), b = g.matrix(128, 8);
  const Matrix off = estimate_gemm(a, b, GemmMode{Rounding::kExact, false, 64}, GemmKeys{});
  const Matrix on = estimate_gemm(a, b, GemmMode{Rounding::kExact, true, 64}, GemmKeys{});
  EXPECT_EQ(off, triple_loop(a, b));
  EXPECT_LT(relative_frobenius_error(on, off), 1e-12);
}

TEST(MxGemm, EffectiveBlock) {
  EXPECT_EQ(effective_rht_block(GemmMode{Rounding::kStochastic, true, 256}, 64), 64u);
  EXPECT_EQ(effective_rht_block(GemmMode{Rounding::kStochastic, true, 64}, 256), 64u);
  EXPECT_THROW(effective_rht_block(GemmMode{Rounding::kStochastic, true, 64}, 96), ShapeError);
  EXPECT_THROW(effective_rht_block(GemmMode{Rounding::kStochastic, true, 16}, 64),
               std::invalid_argument);
}

TEST(MxGemm, PlantedOutlierBiasesNearestButNotSr) {
  // One large entry per group of A pushes the others below half the smallest
  // grid step; B is zero where A is large, so the true product comes only
  // from the entries nearest rounding flushes to zero.
  prop::Gen g(6);
  Matrix a = g.matrix(4, 256), b = g.matrix(256, 4);
  for (std::size_t k = 0; k < 256; k += 32) {
    for (std::size_t i = 0; i < 4; ++i) a(i, k) = 1000.0;
    for (std::size_t j = 0; j < 4; ++j) b(k, j) = 0.0;
  }
  const Matrix ref = triple_loop(a, b);
  const Matrix nearest = estimate_gemm(a, b, GemmMode{Rounding::kNearest, false, 64}, GemmKeys{});
  EXPECT_GT(relative_frobenius_error(nearest, ref), 0.9);
  const std::size_t n = 1000;
  const MeanSd sr = draw_stats(a, b, GemmMode{Rounding::kStochastic, false, 64}, n, false);
  EXPECT_LT(max_z(sr, ref, n), 4.5);
}

TEST(LinearBackward, ExactModeMatchesFormulas) {
  prop::Gen g(7);
  const Matrix dldy = g.matrix(5, 3), x = g.matrix(5, 4), w = g.matrix(3, 4);
  const GradPair gp = linear_backward(dldy, x, w, GemmMode{Rounding::kExact, false, 64}, StreamKey{});
  EXPECT_LT(max_abs_diff(gp.dldx, triple_loop(dldy, w)), 1e-12);
  EXPECT_LT(max_abs_diff(gp.dldw, triple_loop(dldy.transposed(), x)), 1e-12);
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0;
    for (std::size_t r = 0; r < 5; ++r) s += dldy(r, c);
    EXPECT_NEAR(gp.dldb[c], s, 1e-12);
  }
}

TEST(LinearBackward, QuantizedModeRequiresAlignedShapes) {
  const GemmMode sr{};
  EXPECT_THROW(linear_backward(Matrix(32, 32), Matrix(32, 48), Matrix(32, 48), sr, StreamKey{}),
               ShapeError);
  EXPECT_THROW(linear_backward(Matrix(32, 32), Matrix(16, 32), Matrix(32, 32), sr, StreamKey{}),
               ShapeError);
}

TEST(LinearBackward, BiasGradientIsExactInEveryMode) {
  prop::Gen g(8);
  const Matrix dldy = g.matrix(32, 32), x = g.matrix(32, 64), w = g.matrix(32, 64);
  const GradPair ex = linear_backward(dldy, x, w, GemmMode{Rounding::kExact, false, 64}, StreamKey{});
  const GradPair sr = linear_backward(dldy, x, w, GemmMode{Rounding::kStochastic, true, 64}, StreamKey{});
  EXPECT_EQ(ex.dldb, sr.dldb);
}

TEST(GemmVariance, GridOperandsHaveZeroVariance) {
  std::vector<double> a(64, 1.5), b(64, -3.0);
  a[0] = 6.0;
  b[0] = 6.0;
  // 3/4 prescale of a grid point may leave the grid, so only nearest is exact.
  EXPECT_EQ(gemm_variance(a, b, GemmMode{Rounding::kNearest, false, 64}, 10, StreamKey{}), 0.0);
  EXPECT_GT(gemm_variance(a, b, GemmMode{Rounding::kStochastic, false, 64}, 50, StreamKey{}), 0.0);
  EXPECT_THROW(gemm_variance(a, b, GemmMode{}, 1, StreamKey{}), std::invalid_argument);
  EXPECT_THROW(gemm_variance(std::vector<double>(64), std::vector<double>(32), GemmMode{}, 5,
                             StreamKey{}),
               ShapeError);
}

TEST(GemmVariance, ThreadCountDoesNotChangeEstimates) {
  prop::Gen g(9);
  const Matrix a = g.matrix(64, 128), b = g.matrix(128, 48);
  const GemmMode mode{Rounding::kStochastic, true, 64};
  setenv("MX4SIM_THREADS", "1", 1);
  const Matrix one = estimate_gemm(a, b, mode, GemmKeys::from(StreamKey{5}));
  setenv("MX4SIM_THREADS", "8", 1);
  const Matrix eight = estimate_gemm(a, b, mode, GemmKeys::from(StreamKey{5}));
  unsetenv("MX4SIM_THREADS");
  EXPECT_EQ(one, eight);
}

TEST(GemmVariance, GrowsWithLengthAndRhtDoesNotHurt) {
  // Outlier-laden operands: plain variance grows roughly linearly in b and the
  // transformed variance stays at or below it.
  std::vector<double> bs, plain, rht;
  for (std::size_t b : {64u, 256u, 1024u}) {
    double vp = 0, vr = 0;
    const std::size_t pairs = 24;
    for (std::size_t s = 0; s < pairs; ++s) {
      const StreamKey key{11, Domain::kData, {b, s, 0, 0}};
      const auto x = sample_operand(b, 0.01, key.fork(0));
      const auto y = sample_operand(b, 0.01, key.fork(1));
      vp += gemm_variance(x, y, GemmMode{Rounding::kStochastic, false, 1024}, 48, key.fork(2));
      vr += gemm_variance(x, y, GemmMode{Rounding::kStochastic, true, 1024}, 48, key.fork(2));
    }
    bs.push_back(static_cast<double>(b));
    plain.push_back(vp / pairs);
    rht.push_back(vr / pairs);
  }
  const double slope = loglog_slope(bs, plain);
  EXPECT_GT(slope, 0.7);
  EXPECT_LT(slope, 1.6);
  EXPECT_LT(rht.back(), plain.back());
}

}  // namespace
}  // namespace mx4sim
