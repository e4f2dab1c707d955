// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

// Monte-Carlo study of the variance of SR-quantized dot products with and
// without a random Hadamard transform, over operand length b and outlier
// proportion p. Operands are N(0, I) + Bernoulli(p) * N(0, s I) with the
// outlier component added (s = outlier_scale is a variance).

#ifndef MX4SIM_VARIANCELAB_HPP_
#define MX4SIM_VARIANCELAB_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mx4sim/formats.hpp"
#include "mx4sim/rng.hpp"

namespace mx4sim {

struct VarianceSweepConfig {
  std::vector<std::size_t> block_sizes = {32, 64, 128, 256, 512, 1024, 2048, 4096};
  std::vector<double> outlier_props = {0.0, 0.001, 0.01, 0.05};
  double outlier_scale = 5.0;
  std::size_t n_samples = 4096;
  std::size_t inner_draws = 64;
  std::uint64_t seed = 0;
  // Elements sharing one MX scale; 0 means the whole length-b vector.
  std::size_t group_size = 0;
  // Hadamard block; 0 means the whole length-b vector.
  std::size_t rht_g = 0;
  std::size_t bootstrap_resamples = 1000;
  double ci_level = 0.95;

  // Throws std::invalid_argument on an inconsistent configuration.
  void validate() const;
  bool operator==(const VarianceSweepConfig&) const = default;
};

std::vector<double> sample_operand(std::size_t b, double p,
                                   const StreamKey& key,
                                   double outlier_scale = 5.0);

// (c(a) - a)(a - f(a)) with f/c the bracketing grid values. Throws
// std::overflow_error when alpha lies outside the grid.
double sr_variance_oracle(double alpha, const QuantGrid& grid);

// SR-quantized operand ready for repeated draws: each element dequantizes to
// lo[i] or hi[i] (scale and sign applied), the latter with probability p_up[i].
struct SrOperand {
  std::vector<double> lo;
  std::vector<double> hi;
  std::vector<double> p_up;
};

// 3/4-prescaled SR quantization with one shared exponent per group.
SrOperand prepare_sr_operand(std::span<const double> v, std::size_t group);

struct PairVariance {
  double plain = 0.0;
  double rht = 0.0;
};

// Sample variance over `inner_draws` of the 16/9-corrected SR dot product,
// for the raw operands and for their Hadamard transforms (one sign draw per
// pair, shared by both operands).
PairVariance pair_variance(std::span<const double> a, std::span<const double> b,
                           const VarianceSweepConfig& cfg,
                           const StreamKey& pair_key);

struct ConfidenceInterval {
  double low = 0.0;
  double high = 0.0;
};

// Percentile bootstrap interval for the mean.
ConfidenceInterval bootstrap_mean_ci(std::span<const double> values,
                                     std::size_t resamples, double level,
                                     const StreamKey& key);

struct SweepRow {
  std::size_t b = 0;
  double p = 0.0;
  std::string mode;  // "plain" or "rht"
  double mean_variance = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n_samples = 0;
  std::size_t inner_draws = 0;
  std::uint64_t seed = 0;
};

// One row per (b, p, mode), ordered by b, then p, then plain before rht.
std::vector<SweepRow> run_sweep(const VarianceSweepConfig& cfg);

// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

}  // namespace mx4sim

#endif  // MX4SIM_VARIANCELAB_HPP_
