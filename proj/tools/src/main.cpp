// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <iostream>

#include "mx4sim/cli/commands.hpp"
#include "mx4sim/cli/experiment_config.hpp"
#include "mx4sim/errors.hpp"

namespace {

using namespace mx4sim;
using namespace mx4sim::cli;

std::optional<QuantAlgo> algo_from(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return s == "unbiased" ? QuantAlgo::kUnbiased : QuantAlgo::kReference;
}

template <typename T>
std::optional<T> opt_if(const CLI::Option* o, const T& v) {
  return o->count() > 0 ? std::optional<T>(v) : std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mx4sim: MXFP4 training arithmetic emulator"};
  app.require_subcommand(1);
  std::function<int()> action;

  app.add_subcommand("fp4-table", "Print the FP4 code table and format parameters")
      ->callback([&] { action = [] { return cmd_fp4_table(std::cout); }; });

  GenTensorArgs gen;
  std::string gen_dtype = "fp32";
  auto* g = app.add_subcommand("gen-tensor", "Write a synthetic FP32/FP64 tensor file");
  g->add_option("--rows", gen.rows, "Rows")->capture_default_str();
  g->add_option("--cols", gen.cols, "Columns")->capture_default_str();
  g->add_option("--dist", gen.dist, "gaussian | uniform | grid")
      ->check(CLI::IsMember({"gaussian", "uniform", "grid"}))
      ->capture_default_str();
  g->add_option("--dtype", gen_dtype, "fp32 | fp64")
      ->check(CLI::IsMember({"fp32", "fp64"}))
      ->capture_default_str();
  g->add_option("--seed", gen.seed, "Seed")->capture_default_str();
  g->add_option("--out", gen.out, "Output tensor path")->required();
  g->callback([&] {
    gen.dtype = gen_dtype == "fp64" ? DType::kFp64 : DType::kFp32;
    action = [&] { return cmd_gen_tensor(gen, std::cout); };
  });

  QuantizeArgs q;
  std::string q_algo;
  std::uint64_t q_seed = 0;
  fs::path q_stats, q_dequant, q_config;
  auto* qc = app.add_subcommand("quantize", "Quantize a tensor file to MXFP4");
  qc->add_option("input", q.input, "Input FP32/FP64 tensor file")->required();
  qc->add_option("--out", q.out, "Output MXFP4 tensor path")->required();
  auto* qa = qc->add_option("--algo", q_algo, "reference | unbiased")
                 ->check(CLI::IsMember({"reference", "unbiased"}));
  auto* qs = qc->add_option("--seed", q_seed, "Dither seed (unbiased)");
  auto* qcfg = qc->add_option("--config", q_config, "Experiment config JSON");
  auto* qst = qc->add_option("--stats", q_stats, "Stats JSON path (default <out>.stats.json)");
  auto* qd = qc->add_option("--dequant", q_dequant, "Also write the dequantized FP64 tensor");
  qc->callback([&] {
    q.algo = algo_from(qa->count() ? q_algo : "");
    q.seed = opt_if(qs, q_seed);
    q.config = opt_if(qcfg, q_config);
    q.stats = opt_if(qst, q_stats);
    q.dequant = opt_if(qd, q_dequant);
    action = [&] { return cmd_quantize(q, std::cout); };
  });

  SweepArgs sw;
  std::uint64_t sw_seed = 0;
  fs::path sw_config, sw_meta;
  auto* sc = app.add_subcommand("variance-sweep", "Run the SR dot-product variance sweep");
  auto* swc = sc->add_option("--config", sw_config, "Experiment config JSON");
  sc->add_option("--out", sw.out, "Output CSV path")->required();
  auto* sws = sc->add_option("--seed", sw_seed, "Override the sweep seed");
  auto* swm = sc->add_option("--meta", sw_meta, "Metadata JSON path (default <out>.meta.json)");
  sc->callback([&] {
    sw.config = opt_if(swc, sw_config);
    sw.seed = opt_if(sws, sw_seed);
    sw.meta = opt_if(swm, sw_meta);
    action = [&] { return cmd_variance_sweep(sw, std::cout); };
  });

  TrainArgs tr;
  std::uint64_t tr_seed = 0;
  std::string tr_arms;
  std::size_t tr_g = 0;
  fs::path tr_config;
  auto* tc = app.add_subcommand("train", "Train the toy MLP under each backward arm");
  auto* trc = tc->add_option("--config", tr_config, "Experiment config JSON");
  tc->add_option("--out", tr.out_dir, "Output directory")->required();
  auto* trs = tc->add_option("--seed", tr_seed, "Run a single seed");
  auto* tra = tc->add_option("--arms", tr_arms, "'all' or comma list, e.g. EXACT,MXFP4");
  auto* trg = tc->add_option("--g", tr_g, "RHT block size");
  tc->callback([&] {
    tr.config = opt_if(trc, tr_config);
    tr.seed = opt_if(trs, tr_seed);
    tr.arms = opt_if(tra, tr_arms);
    tr.g = opt_if(trg, tr_g);
    action = [&] { return cmd_train(tr, std::cout); };
  });

  SelftestArgs st;
  std::string fault;
  auto* stc = app.add_subcommand("selftest", "Run the invariant suite");
  stc->add_option("--inject-fault", fault, "Plant a known bug; 'correction' drops the 16/9 factor")
      ->check(CLI::IsMember({"correction"}));
  stc->callback([&] {
    st.inject_correction_fault = fault == "correction";
    action = [&] { return cmd_selftest(st, std::cout); };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    return action();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
  } catch (const TensorFileError& e) {
    std::cerr << "tensor file error: " << e.what() << '\n';
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << '\n';
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
  }
  return kExitUsage;
}
