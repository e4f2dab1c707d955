// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

// Subcommand implementations behind the mx4sim executable. Each returns the
// process exit code: 0 success, 1 invariant failure. Bad input raises
// UsageError, ConfigError or TensorFileError, which map to exit code 2.

#ifndef MX4SIM_CLI_COMMANDS_HPP_
#define MX4SIM_CLI_COMMANDS_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>

#include "mx4sim/cli/tensor_file.hpp"
#include "mx4sim/mx.hpp"

namespace mx4sim::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvariant = 1;
inline constexpr int kExitUsage = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// FP4 code table and the standard format parameter rows.
int cmd_fp4_table(std::ostream& out);

struct GenTensorArgs {
  std::size_t rows = 1024;
  std::size_t cols = 1024;
  // gaussian: N(0, 1); uniform: U(-1, 1); grid: every 32-block is an FP4
  // grid vector with one +/-6 entry times a random power of two, so the
  // reference quantizer reproduces it exactly.
  std::string dist = "gaussian";
  DType dtype = DType::kFp32;
  std::uint64_t seed = 0;
  fs::path out;
};
int cmd_gen_tensor(const GenTensorArgs& args, std::ostream& out);

struct QuantizeArgs {
  fs::path input;
  fs::path out;
  std::optional<fs::path> config;
  std::optional<QuantAlgo> algo;      // overrides config
  std::optional<std::uint64_t> seed;  // overrides config
  std::optional<fs::path> stats;      // default: <out>.stats.json
  std::optional<fs::path> dequant;    // FP64 dequantized companion
};
int cmd_quantize(const QuantizeArgs& args, std::ostream& out);

struct SweepArgs {
  fs::path out;
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> meta;  // default: <out>.meta.json
};
int cmd_variance_sweep(const SweepArgs& args, std::ostream& out);

struct TrainArgs {
  fs::path out_dir;
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;  // replaces the seed list
  std::optional<std::string> arms;    // "all" or comma list
  std::optional<std::size_t> g;       // rht_g override
};
int cmd_train(const TrainArgs& args, std::ostream& out);

struct SelftestArgs {
  // Replaces the 16/9 stochastic-mode correction with 1; the run must fail.
  bool inject_correction_fault = false;
};
int cmd_selftest(const SelftestArgs& args, std::ostream& out);

}  // namespace mx4sim::cli

#endif  // MX4SIM_CLI_COMMANDS_HPP_
