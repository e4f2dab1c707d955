// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef MX4SIM_QGEMM_HPP_
#define MX4SIM_QGEMM_HPP_

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "mx4sim/matrix.hpp"
#include "mx4sim/rht.hpp"
#include "mx4sim/rng.hpp"

namespace mx4sim {

enum class Rounding {
  kNearest,     // reference quantizer, no output correction
  kStochastic,  // 3/4-prescaled SR quantizer, 16/9 output correction
  kExact,       // quantization bypass (full-precision product)
};

struct GemmMode {
  Rounding rounding = Rounding::kStochastic;
  bool use_rht = false;
  std::size_t rht_g = kDefaultRhtBlock;

  bool operator==(const GemmMode&) const = default;
};

std::string_view to_string(Rounding r);

// Output rescale applied to stochastic-mode estimates: (4/3)^2 = 16/9.
double sr_correction();

namespace testing {
// Replaces the stochastic-mode correction while alive. Fault injection for
// self-tests; not thread-safe with respect to concurrent estimates.
class ScopedCorrectionOverride {
 public:
  explicit ScopedCorrectionOverride(double factor);
  ~ScopedCorrectionOverride();
  ScopedCorrectionOverride(const ScopedCorrectionOverride&) = delete;
  ScopedCorrectionOverride& operator=(const ScopedCorrectionOverride&) = delete;

 private:
  double previous_;
};
}  // namespace testing

// A (M x K) * B (K x N) in double, each output summed in increasing k.
Matrix exact_gemm(const Matrix& a, const Matrix& b);

// Quantizes rows of A and columns of B into 32-wide MX groups along K and
// accumulates per-group integer code dot products scaled by X_A * X_B in
// double, in block order. Returns the raw product: in stochastic mode its
// expectation is (9/16) A B. Operand dither streams are independent (A and B
// draw from key.fork(0) and key.fork(1)). kExact forwards to exact_gemm.
// Throws ShapeError on mismatched inner dims or K % 32 != 0 and
// std::invalid_argument on non-finite inputs.
Matrix mxfp4_gemm(const Matrix& a, const Matrix& b, const GemmMode& mode,
                  const StreamKey& key);

// Keys for one estimated product: RHT signs and quantization dither.
struct GemmKeys {
  StreamKey sign;
  StreamKey dither;
  static GemmKeys from(const StreamKey& key);
};

// Block size actually used along a reduction axis of length k:
// min(mode.rht_g, k). Throws ShapeError when k is not a multiple of it.
std::size_t effective_rht_block(const GemmMode& mode, std::size_t k);

// Estimate of A * B: optional blockwise RHT of both operands along K with
// matched signs, mxfp4_gemm, then the 16/9 correction in stochastic mode.
Matrix estimate_gemm(const Matrix& a, const Matrix& b, const GemmMode& mode,
                     const GemmKeys& keys);

struct GradPair {
  Matrix dldx;                // b x n
  Matrix dldw;                // m x n
  std::vector<double> dldb;   // m, always full precision
};

// Backward pass of y = x W^T (+ bias): dL/dx = dL/dy W, dL/dW = dL/dy^T x.
// dldy is b x m, x is b x n, w is m x n. Quantized modes need b, m and n to
// be multiples of 32; with use_rht the reduction dims (m for dL/dx, b for
// dL/dW) must be multiples of the effective block size.
GradPair linear_backward(const Matrix& dldy, const Matrix& x, const Matrix& w,
                         const GemmMode& mode, const StreamKey& key);

// Sample variance (n - 1 denominator) of the corrected estimate of a^T b over
// n_draws dither draws. With use_rht the sign vector is fixed across draws,
// so only rounding noise contributes.
double gemm_variance(std::span<const double> a, std::span<const double> b,
                     const GemmMode& mode, std::size_t n_draws,
                     const StreamKey& key);

}  // namespace mx4sim

#endif  // MX4SIM_QGEMM_HPP_
