// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

// MXFP4 blocks: 32 FP4 codes sharing one power-of-two scale X = 2^scale_exp.
//
// Two quantizers are provided. The reference quantizer picks
//   scale_exp = floor(log2(max |V_i|)) - emax_elem        (emax_elem = 2)
// and rounds V_i / X to the nearest FP4 value. Scaled magnitudes land in
// [0, 8) while FP4 tops out at 6, so the largest entries can clip and the
// result is biased. The unbiased quantizer uses the same scale, multiplies
// the scaled values by 3/4 (bounding them strictly below 6) and rounds
// stochastically; its dequantized output is an unbiased estimate of (3/4) V.

#ifndef MX4SIM_MX_HPP_
#define MX4SIM_MX_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mx4sim/formats.hpp"
#include "mx4sim/matrix.hpp"
#include "mx4sim/rng.hpp"

namespace mx4sim {

inline constexpr std::size_t kMxBlockSize = 32;
inline constexpr int kFp4Emax = 2;
inline constexpr int kMaxScaleExp = 127;
inline constexpr double kUnbiasedPrescale = 0.75;

struct MxBlock {
  std::int8_t scale_exp = 0;
  std::array<Fp4Code, kMxBlockSize> codes{};

  double scale() const;
  bool operator==(const MxBlock&) const = default;
};

struct QuantStats {
  std::string label;
  // Entries whose |scaled value| exceeded the FP4 max before rounding.
  double clipped_fraction = 0.0;
  // Same count under the reference quantizer; equals clipped_fraction on
  // the reference path, and is kept for comparison on the unbiased path.
  double reference_clipped_fraction = 0.0;
  double mean_scale_exp = 0.0;
  std::size_t num_blocks = 0;
  // Shared exponents that had to be clamped to [-127, 127].
  std::size_t scale_saturations = 0;
  // Unbiased-path entries that still exceeded 6 after the 3/4 prescale.
  // Only possible after a scale saturation.
  std::size_t overflow_events = 0;
};

// floor(log2(max |v_i|)) - emax, computed exactly with frexp. Returns 0 for
// an all-zero group. Not clamped. Throws std::invalid_argument on NaN/Inf.
int shared_exponent(std::span<const double> group, int emax = kFp4Emax);

struct ReferenceBlockResult {
  MxBlock block;
  QuantStats stats;
};

ReferenceBlockResult quantize_block_reference(std::span<const double> v);

// Element i draws its dither from CounterStream(key).uniform(i).
MxBlock quantize_block_unbiased(std::span<const double> v,
                                const StreamKey& key);

std::array<double, kMxBlockSize> dequantize_block(const MxBlock& b);

// Row-major tiling: each row is split into cols / 32 blocks along the
// column (reduction) dimension.
struct MxMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<MxBlock> blocks;

  std::size_t blocks_per_row() const { return cols / kMxBlockSize; }
  const MxBlock& block(std::size_t r, std::size_t j) const {
    return blocks[r * blocks_per_row() + j];
  }
  bool operator==(const MxMatrix&) const = default;
};

enum class QuantAlgo { kReference, kUnbiased };

struct MxQuantized {
  MxMatrix matrix;
  QuantStats stats;
};

// Element (r, c) of the unbiased path draws CounterStream(key).uniform(r *
// cols + c). Throws ShapeError when cols is not a multiple of 32.
MxQuantized quantize_matrix(const Matrix& m, QuantAlgo algo,
                            const StreamKey& key = {});

Matrix dequantize(const MxMatrix& m);

// Reference-quantizer scaling statistics without producing codes.
QuantStats measure_clipping(const Matrix& m, std::string_view label = {});

}  // namespace mx4sim

#endif  // MX4SIM_MX_HPP_
