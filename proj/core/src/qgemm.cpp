// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "mx4sim/qgemm.hpp"

#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "mx4sim/errors.hpp"
#include "mx4sim/mx.hpp"
#include "mx4sim/parallel.hpp"

namespace mx4sim {

namespace {

constexpr double kSrCorrection = 16.0 / 9.0;
std::atomic<double> g_correction{kSrCorrection};

// Operand in grouped layout: `rows` lines of length k, stored as twice the
// FP4 value (small integers) plus one power-of-two scale per 32-group.
struct GroupedOperand {
  std::size_t rows = 0;
  std::size_t k = 0;
  std::vector<std::int16_t> half_units;
  std::vector<double> scales;  // 2^scale_exp
};

GroupedOperand to_grouped(const MxMatrix& q) {
  GroupedOperand g;
  g.rows = q.rows;
  g.k = q.cols;
  g.half_units.resize(q.rows * q.cols);
  g.scales.resize(q.blocks.size());
  for (std::size_t bi = 0; bi < q.blocks.size(); ++bi) {
    const MxBlock& blk = q.blocks[bi];
    g.scales[bi] = blk.scale();
    for (std::size_t l = 0; l < kMxBlockSize; ++l) {
      g.half_units[bi * kMxBlockSize + l] =
          static_cast<std::int16_t>(decode_half_units(blk.codes[l]));
    }
  }
  return g;
}

void require_finite(const Matrix& m) {
  for (double v : m.data()) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("mxfp4_gemm: non-finite operand entry");
    }
  }
}

}  // namespace

std::string_view to_string(Rounding r) {
  switch (r) {
    case Rounding::kNearest: return "nearest";
    case Rounding::kStochastic: return "stochastic";
    case Rounding::kExact: return "exact";
  }
  return "unknown";
}

double sr_correction() { return g_correction.load(std::memory_order_relaxed); }

namespace testing {
ScopedCorrectionOverride::ScopedCorrectionOverride(double factor)
    : previous_(g_correction.exchange(factor)) {}
ScopedCorrectionOverride::~ScopedCorrectionOverride() {
  g_correction.store(previous_);
}
}  // namespace testing

Matrix exact_gemm(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("exact_gemm: inner dimensions differ (" +
                     std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()) + ")");
  }
  const std::size_t n = b.cols();
  const std::size_t k = a.cols();
  Matrix c(a.rows(), n);
  parallel_for(a.rows(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      double* out = c.row(i).data();
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a(i, p);
        const double* brow = b.row(p).data();
        for (std::size_t j = 0; j < n; ++j) out[j] += av * brow[j];
      }
    }
  });
  return c;
}

Matrix mxfp4_gemm(const Matrix& a, const Matrix& b, const GemmMode& mode,
                  const StreamKey& key) {
  if (a.cols() != b.rows()) {
    throw ShapeError("mxfp4_gemm: inner dimensions differ (" +
                     std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()) + ")");
  }
  if (mode.rounding == Rounding::kExact) return exact_gemm(a, b);
  if (a.cols() % kMxBlockSize != 0) {
    throw ShapeError("mxfp4_gemm: reduction dimension " +
                     std::to_string(a.cols()) + " is not a multiple of 32");
  }
  require_finite(a);
  require_finite(b);

  const QuantAlgo algo = mode.rounding == Rounding::kNearest
                             ? QuantAlgo::kReference
                             : QuantAlgo::kUnbiased;
  const GroupedOperand qa =
      to_grouped(quantize_matrix(a, algo, key.fork(0)).matrix);
  const GroupedOperand qb =
      to_grouped(quantize_matrix(b.transposed(), algo, key.fork(1)).matrix);

  const std::size_t k = a.cols();
  const std::size_t groups = k / kMxBlockSize;
  Matrix c(a.rows(), b.cols());
  parallel_for(a.rows(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const std::int16_t* arow = qa.half_units.data() + i * k;
      const double* ascale = qa.scales.data() + i * groups;
      for (std::size_t j = 0; j < qb.rows; ++j) {
        const std::int16_t* brow = qb.half_units.data() + j * k;
        const double* bscale = qb.scales.data() + j * groups;
        double acc = 0.0;
        for (std::size_t blk = 0; blk < groups; ++blk) {
          std::int32_t dot = 0;
          const std::size_t off = blk * kMxBlockSize;
          for (std::size_t l = 0; l < kMxBlockSize; ++l) {
            dot += static_cast<std::int32_t>(arow[off + l]) * brow[off + l];
          }
          // Half units on both sides: divide by 4. Every factor is a power of
          // two or a small integer, so the block term is exact.
          acc += static_cast<double>(dot) * (ascale[blk] * bscale[blk] * 0.25);
        }
        c(i, j) = acc;
      }
    }
  });
  return c;
}

GemmKeys GemmKeys::from(const StreamKey& key) {
  return GemmKeys{key.with_domain(Domain::kSign),
                  key.with_domain(Domain::kDither)};
}

std::size_t effective_rht_block(const GemmMode& mode, std::size_t k) {
  validate_gemm_block(mode.rht_g);
  const std::size_t g = std::min(mode.rht_g, k);
  if (g == 0 || k % g != 0 || !is_power_of_two(g)) {
    throw ShapeError("RHT: reduction dimension " + std::to_string(k) +
                     " is not a multiple of block size " +
                     std::to_string(mode.rht_g));
  }
  return g;
}

Matrix estimate_gemm(const Matrix& a, const Matrix& b, const GemmMode& mode,
                     const GemmKeys& keys) {
  if (a.cols() != b.rows()) {
    throw ShapeError("estimate_gemm: inner dimensions differ");
  }
  Matrix out;
  if (mode.use_rht) {
    RhtSpec spec;
    spec.g = effective_rht_block(mode, a.cols());
    spec.sign_key = keys.sign;
    const Matrix ta = rht_apply(a, Axis::kRow, spec);
    const Matrix tb = rht_apply(b, Axis::kColumn, spec);
    out = mxfp4_gemm(ta, tb, mode, keys.dither);
  } else {
    out = mxfp4_gemm(a, b, mode, keys.dither);
  }
  if (mode.rounding == Rounding::kStochastic) {
    const double corr = sr_correction();
    for (double& v : out.data()) v *= corr;
  }
  return out;
}

GradPair linear_backward(const Matrix& dldy, const Matrix& x, const Matrix& w,
                         const GemmMode& mode, const StreamKey& key) {
  const std::size_t batch = dldy.rows();
  const std::size_t m = dldy.cols();
  const std::size_t n = x.cols();
  if (x.rows() != batch || w.rows() != m || w.cols() != n) {
    throw ShapeError("linear_backward: expected dldy (b x m), x (b x n), "
                     "W (m x n)");
  }
  if (mode.rounding != Rounding::kExact &&
      (m % kMxBlockSize || n % kMxBlockSize || batch % kMxBlockSize)) {
    throw ShapeError("linear_backward: b, m and n must be multiples of 32");
  }
  GradPair g;
  g.dldx = estimate_gemm(dldy, w, mode, GemmKeys::from(key.fork(0)));
  g.dldw = estimate_gemm(dldy.transposed(), x, mode,
                         GemmKeys::from(key.fork(1)));
  g.dldb.assign(m, 0.0);
  for (std::size_t r = 0; r < batch; ++r) {
    for (std::size_t c = 0; c < m; ++c) g.dldb[c] += dldy(r, c);
  }
  return g;
}

double gemm_variance(std::span<const double> a, std::span<const double> b,
                     const GemmMode& mode, std::size_t n_draws,
                     const StreamKey& key) {
  if (a.size() != b.size()) throw ShapeError("gemm_variance: length mismatch");
  if (a.size() % kMxBlockSize != 0) {
    throw ShapeError("gemm_variance: length must be a multiple of 32");
  }
  if (n_draws < 2) throw std::invalid_argument("gemm_variance: need >= 2 draws");
  Matrix ma = Matrix::from_vector(1, a.size(), {a.begin(), a.end()});
  Matrix mb = Matrix::from_vector(b.size(), 1, {b.begin(), b.end()});
  const GemmKeys keys = GemmKeys::from(key);
  if (mode.use_rht) {
    RhtSpec spec;
    spec.g = effective_rht_block(mode, a.size());
    spec.sign_key = keys.sign;
    ma = rht_apply(ma, Axis::kRow, spec);
    mb = rht_apply(mb, Axis::kColumn, spec);
  }
  const double corr =
      mode.rounding == Rounding::kStochastic ? sr_correction() : 1.0;
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t d = 0; d < n_draws; ++d) {
    const double v = corr * mxfp4_gemm(ma, mb, mode, keys.dither.fork(d))(0, 0);
    const double delta = v - mean;
    mean += delta / static_cast<double>(d + 1);
    m2 += delta * (v - mean);
  }
  return m2 / static_cast<double>(n_draws - 1);
}

}  // namespace mx4sim
