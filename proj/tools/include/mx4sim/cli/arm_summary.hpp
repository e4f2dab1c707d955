// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

// Seed-level statistics over training runs and the arm-ordering verdict
// written to summary.json by the train command.

#ifndef MX4SIM_CLI_ARM_SUMMARY_HPP_
#define MX4SIM_CLI_ARM_SUMMARY_HPP_

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "mx4sim/train.hpp"
#include "mx4sim/variancelab.hpp"

namespace mx4sim::cli {

// Relative slack allowed between EXACT and MXFP4_RHT_SR mean final losses.
inline constexpr double kExactMargin = 0.05;

struct MeanInterval {
  double mean = 0.0;
  // Student-t interval; absent with fewer than two values.
  std::optional<ConfidenceInterval> ci;
};

MeanInterval t_interval(std::span<const double> values, double level = 0.95);

// Interval for the mean of a[i] - b[i]. Sizes must match.
MeanInterval paired_difference(std::span<const double> a,
                               std::span<const double> b, double level = 0.95);

struct OrderingVerdict {
  // mean(EXACT) <= (1 + kExactMargin) * mean(MXFP4_RHT_SR).
  std::optional<bool> exact_close;
  // Paired interval of MXFP4 - MXFP4_RHT_SR lies above zero.
  std::optional<bool> mxfp4_separated;
  // No consecutive ablation step has a paired interval above zero.
  std::optional<bool> ablation_non_increasing;
};

// Final losses keyed by arm (ordered by seed) and by ablation block size.
// Missing arms leave the matching verdict empty.
OrderingVerdict ordering_verdict(
    const std::map<BackwardMode, std::vector<double>>& arms,
    const std::map<std::size_t, std::vector<double>>& ablation,
    double level = 0.95);

}  // namespace mx4sim::cli

#endif  // MX4SIM_CLI_ARM_SUMMARY_HPP_
