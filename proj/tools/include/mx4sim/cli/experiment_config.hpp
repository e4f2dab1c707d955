// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

// JSON experiment configuration with three optional sections:
//
//   {
//     "quantize":       { "algo": "reference", "seed": 0 },
//     "variance_sweep": { "block_sizes": [...], "outlier_props": [...], ... },
//     "train":          { "arms": ["EXACT", ...], "seeds": [0, 1, 2], ... }
//   }
//
// Every field has a default and unknown keys are rejected. dump_config
// writes every field, so parse_config(dump_config(c)) == c.

#ifndef MX4SIM_CLI_EXPERIMENT_CONFIG_HPP_
#define MX4SIM_CLI_EXPERIMENT_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mx4sim/mx.hpp"
#include "mx4sim/train.hpp"
#include "mx4sim/variancelab.hpp"

namespace mx4sim::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct QuantizeOptions {
  QuantAlgo algo = QuantAlgo::kReference;
  std::uint64_t seed = 0;

  bool operator==(const QuantizeOptions&) const = default;
};

// Arms and seeds to run on top of a shared TrainConfig. `base.backward_mode`
// and `base.seed` are overwritten per run and are not part of the JSON.
// ablation_g lists extra MXFP4_RHT_SR runs, one per block size and seed.
struct TrainPlan {
  TrainConfig base;
  std::vector<BackwardMode> arms = {std::begin(kAllBackwardModes),
                                    std::end(kAllBackwardModes)};
  std::vector<std::uint64_t> seeds = {0};
  std::vector<std::size_t> ablation_g;

  bool operator==(const TrainPlan&) const = default;
};

struct ExperimentConfig {
  QuantizeOptions quantize;
  VarianceSweepConfig variance_sweep;
  TrainPlan train;

  bool operator==(const ExperimentConfig&) const = default;
};

// Throws ConfigError naming the offending key on malformed JSON, unknown
// keys, wrong types or values that fail validation.
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Pretty-printed JSON with every field, keys sorted.
std::string dump_config(const ExperimentConfig& cfg);
// Compact single-section dumps; these are hashed into output metadata.
std::string dump_variance_sweep(const VarianceSweepConfig& cfg);
std::string dump_train_config(const TrainConfig& cfg);

std::string_view to_string(QuantAlgo algo);
// "all" or a comma-separated list of arm names. Throws ConfigError.
std::vector<BackwardMode> parse_arms(std::string_view text);

}  // namespace mx4sim::cli

#endif  // MX4SIM_CLI_EXPERIMENT_CONFIG_HPP_
