// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

// Blockwise random Hadamard transform. An axis of length L is cut into L / g
// contiguous segments; segment j is mapped by v -> H diag(S_j) v, where H is
// the orthonormal g x g Sylvester-Hadamard matrix and S_j is a random sign
// vector derived from (sign_key, j). Two GEMM operands transformed along
// their shared reduction axis with the same key keep their product:
// (H S a)^T (H S b) = a^T b.

#ifndef MX4SIM_RHT_HPP_
#define MX4SIM_RHT_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mx4sim/matrix.hpp"
#include "mx4sim/rng.hpp"

namespace mx4sim {

inline constexpr std::size_t kDefaultRhtBlock = 64;
inline constexpr std::size_t kMaxRhtBlock = 1024;

struct HadamardMatrix {
  std::size_t g = 1;
  Matrix entries;  // symmetric, entries +/- 1/sqrt(g)
};

bool is_power_of_two(std::size_t n);

// Throws std::invalid_argument unless g is a power of two.
HadamardMatrix hadamard(std::size_t g);

// In-place orthonormal fast Walsh-Hadamard transform (same ordering as
// hadamard(g)). Length must be a power of two.
void fwht_orthonormal(std::span<double> v);

// kRow: every row is segmented (transform acts along the column index).
// kColumn: every column is segmented (transform acts along the row index).
enum class Axis { kRow, kColumn };
enum class Direction { kForward, kInverse };

struct RhtSpec {
  std::size_t g = kDefaultRhtBlock;
  StreamKey sign_key{0, Domain::kSign, {}};
  Direction direction = Direction::kForward;
  // All-ones signs; turns the transform into a plain blockwise Hadamard.
  bool identity_signs = false;
};

// Checks the GEMM-side block-size contract: power of two, 32 | g, g <= 1024.
void validate_gemm_block(std::size_t g);

// Sign vector for segment j of a transform.
std::vector<std::int8_t> segment_signs(const RhtSpec& spec, std::size_t j);

// Dense g x g multiply per segment. Forward: v -> H S v; inverse:
// v -> S H^T v. Throws ShapeError when the axis length is not a multiple of
// g and std::invalid_argument when g is not a power of two.
Matrix rht_apply(const Matrix& m, Axis axis, const RhtSpec& spec);

// Same map through the O(g log g) butterfly. Agrees with rht_apply to within
// a few ulps; used where g is large (variance sweeps).
Matrix rht_apply_fast(const Matrix& m, Axis axis, const RhtSpec& spec);

struct TailBoundRow {
  double threshold = 0.0;
  double empirical = 0.0;  // fraction of trials with max_i |(H S x)_i| >= a
  double bound = 0.0;      // min(1, 2 g exp(-a^2 g / (2 ||x||^2)))
  double slack = 0.0;      // 3 binomial standard errors at `bound`
  bool within() const { return empirical <= bound + slack; }
};

// Exceedance of ||H S x||_inf over n_trials fresh sign vectors, compared
// with the union bound. x must be a power-of-two length >= 32.
std::vector<TailBoundRow> tail_bound_check(std::span<const double> x,
                                           std::span<const double> thresholds,
                                           std::size_t n_trials,
                                           const StreamKey& key);

}  // namespace mx4sim

#endif  // MX4SIM_RHT_HPP_
