// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "mx4sim/cli/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

#include "mx4sim/cli/arm_summary.hpp"
#include "mx4sim/cli/experiment_config.hpp"
#include "mx4sim/formats.hpp"
#include "mx4sim/hash.hpp"
#include "mx4sim/rng.hpp"
#include "mx4sim/train.hpp"
#include "mx4sim/variancelab.hpp"

namespace mx4sim::cli {
namespace {

using nlohmann::json;

// Shortest decimal text that parses back to the same double.
std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw UsageError("cannot create " + path.string());
  return f;
}

void write_json(const fs::path& path, const json& j) {
  auto f = open_out(path);
  f << j.dump(2) << '\n';
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
  return fs::path(p.string() + suffix);
}

ExperimentConfig config_or_default(const std::optional<fs::path>& path) {
  return path ? load_config(*path) : ExperimentConfig{};
}

json stats_json(const QuantStats& s) {
  return {{"label", s.label},
          {"clipped_fraction", s.clipped_fraction},
          {"reference_clipped_fraction", s.reference_clipped_fraction},
          {"mean_scale_exp", s.mean_scale_exp},
          {"num_blocks", s.num_blocks},
          {"scale_saturations", s.scale_saturations},
          {"overflow_events", s.overflow_events}};
}

std::string binary4(std::uint8_t bits) {
  std::string s = "0b";
  for (int b = 3; b >= 0; --b) s.push_back((bits >> b) & 1 ? '1' : '0');
  return s;
}

std::string run_stem(BackwardMode m, std::uint64_t seed) {
  return std::string(to_string(m)) + "_seed" + std::to_string(seed);
}

void write_loss_csv(const fs::path& path, const RunRecord& r) {
  auto f = open_out(path);
  f << "step,loss,mode,seed\n";
  const std::string mode(to_string(r.config.backward_mode));
  for (std::size_t i = 0; i < r.losses.size(); ++i) {
    f << i << ',' << num(r.losses[i]) << ',' << mode << ',' << r.seed << '\n';
  }
}

json record_json(const RunRecord& r, const std::string& csv_name) {
  return {{"config", json::parse(dump_train_config(r.config))},
          {"config_hash", r.config_hash},
          {"seed", r.seed},
          {"steps_completed", r.losses.size()},
          {"initial_eval_loss", r.initial_eval_loss},
          {"final_eval_loss", r.final_eval_loss},
          {"failed", r.failed},
          {"failure", r.failure},
          {"loss_csv", csv_name}};
}

json optional_bool(const std::optional<bool>& b) {
  return b ? json(*b) : json(nullptr);
}

json group_json(const std::vector<double>& finals,
                const std::vector<std::string>& hashes) {
  const MeanInterval mi = t_interval(finals);
  json j = {{"final_losses", finals}, {"mean", mi.mean}, {"config_hashes", hashes}};
  j["ci95"] = mi.ci ? json::array({mi.ci->low, mi.ci->high}) : json(nullptr);
  return j;
}

}  // namespace

int cmd_fp4_table(std::ostream& out) {
  out << "FP4 E2M1 codes\n";
  out << "code    hex  sign exp mant  value\n";
  for (std::uint8_t c = 0; c < 16; ++c) {
    const Fp4Code code{c};
    char line[64];
    std::snprintf(line, sizeof(line), "%s  0x%X  %u    %u   %u     %s\n",
                  binary4(c).c_str(), c, (c >> 3) & 1u, (c >> 1) & 3u, c & 1u,
                  num(decode(code)).c_str());
    out << line;
  }
  out << "\nformat     bits exp mantissa bias emax max_normal\n";
  for (const FpFormat& f : standard_formats()) {
    char line[128];
    std::snprintf(line, sizeof(line), "%-10s %4d %3d %8d %4d %4d %s\n",
                  std::string(f.name).c_str(), f.total_bits(), f.exp_bits,
                  f.mantissa_bits, f.exp_bias, f.emax(),
                  num(f.max_normal()).c_str());
    out << line;
  }
  return kExitOk;
}

int cmd_gen_tensor(const GenTensorArgs& args, std::ostream& out) {
  if (args.dtype == DType::kMxfp4) throw UsageError("gen-tensor: dtype must be fp32 or fp64");
  Matrix m(args.rows, args.cols);
  const StreamKey key{args.seed, Domain::kData, {}};
  const CounterStream stream(key);
  if (args.dist == "gaussian") {
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = stream.normal(i);
  } else if (args.dist == "uniform") {
    for (std::size_t i = 0; i < m.size(); ++i) {
      m.data()[i] = 2.0 * stream.uniform(i) - 1.0;
    }
  } else if (args.dist == "grid") {
    if (args.cols % kMxBlockSize != 0) {
      throw UsageError("gen-tensor: grid needs cols divisible by 32");
    }
    const CounterStream exps(key, 1);
    for (std::size_t i = 0; i < m.size(); ++i) {
      const std::size_t block = i / kMxBlockSize;
      const int e = static_cast<int>(exps.bits(block) % 21) - 10;
      const auto bits = static_cast<std::uint8_t>(stream.bits(i) & 0xF);
      const Fp4Code code{i % kMxBlockSize == 0 ? static_cast<std::uint8_t>(bits | 0x7)
                                               : bits};
      m.data()[i] = std::ldexp(decode(code), e);
    }
  } else {
    throw UsageError("gen-tensor: unknown dist '" + args.dist + "'");
  }
  save_tensor(args.out, tensor_from_matrix(m, args.dtype));
  out << "wrote " << args.rows << "x" << args.cols << " " << to_string(args.dtype)
      << " tensor to " << args.out.string() << '\n';
  return kExitOk;
}

int cmd_quantize(const QuantizeArgs& args, std::ostream& out) {
  QuantizeOptions opts = config_or_default(args.config).quantize;
  if (args.algo) opts.algo = *args.algo;
  if (args.seed) opts.seed = *args.seed;

  const Tensor input = load_tensor(args.input);
  const Matrix m = as_matrix(input);
  const StreamKey key{opts.seed, Domain::kDither, {}};
  const MxQuantized q = quantize_matrix(m, opts.algo, key);
  save_tensor(args.out, tensor_from_mx(q.matrix, input.dims));
  if (args.dequant) {
    Tensor d = tensor_from_matrix(dequantize(q.matrix), DType::kFp64);
    d.dims = input.dims;
    save_tensor(*args.dequant, d);
  }

  json j = stats_json(q.stats);
  j["algo"] = std::string(to_string(opts.algo));
  j["seed"] = opts.seed;
  j["dims"] = input.dims;
  j["input_dtype"] = to_string(input.dtype);
  write_json(args.stats.value_or(with_suffix(args.out, ".stats.json")), j);
  out << "algo=" << to_string(opts.algo) << " blocks=" << q.stats.num_blocks
      << " clipped_fraction=" << num(q.stats.clipped_fraction)
      << " mean_scale_exp=" << num(q.stats.mean_scale_exp) << '\n';
  return kExitOk;
}

int cmd_variance_sweep(const SweepArgs& args, std::ostream& out) {
  VarianceSweepConfig cfg = config_or_default(args.config).variance_sweep;
  if (args.seed) cfg.seed = *args.seed;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const std::vector<SweepRow> rows = run_sweep(cfg);

  {
    auto f = open_out(args.out);
    f << "b,p,mode,mean_variance,ci_low,ci_high,n_samples,inner_draws,seed\n";
    for (const SweepRow& r : rows) {
      f << r.b << ',' << num(r.p) << ',' << r.mode << ',' << num(r.mean_variance)
        << ',' << num(r.ci_low) << ',' << num(r.ci_high) << ',' << r.n_samples
        << ',' << r.inner_draws << ',' << r.seed << '\n';
    }
  }
  const std::string canonical = dump_variance_sweep(cfg);
  const json meta = {
      {"config", json::parse(canonical)},
      {"config_hash", git_blob_hash(canonical)},
      {"seed", cfg.seed},
      {"rows", rows.size()},
      {"outlier_model",
       "additive: x = z + B * sqrt(outlier_scale) * w with z, w ~ N(0, 1) "
       "and B ~ Bernoulli(p); outlier_scale is a variance"},
      {"scale_group", cfg.group_size == 0 ? json("whole vector") : json(cfg.group_size)},
      {"rht_block", cfg.rht_g == 0 ? json("whole vector") : json(cfg.rht_g)},
      {"estimator", "sample variance over inner_draws of the 16/9-corrected SR dot product"}};
  write_json(args.meta.value_or(with_suffix(args.out, ".meta.json")), meta);
  out << "wrote " << rows.size() << " rows to " << args.out.string() << '\n';
  return kExitOk;
}

int cmd_train(const TrainArgs& args, std::ostream& out) {
  TrainPlan plan = config_or_default(args.config).train;
  if (args.seed) plan.seeds = {*args.seed};
  if (args.arms) plan.arms = parse_arms(*args.arms);
  if (args.g) plan.base.rht_g = *args.g;
  try {
    plan.base.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  fs::create_directories(args.out_dir);

  std::map<std::string, RunRecord> cache;
  bool any_failed = false;
  auto run = [&](const TrainConfig& cfg, const std::string& stem) -> const RunRecord& {
    const std::string hash = config_hash(cfg);
    auto it = cache.find(hash);
    if (it == cache.end()) it = cache.emplace(hash, train_run(cfg)).first;
    const RunRecord& r = it->second;
    any_failed = any_failed || r.failed;
    write_loss_csv(args.out_dir / (stem + ".csv"), r);
    write_json(args.out_dir / (stem + ".json"), record_json(r, stem + ".csv"));
    out << stem << " final_eval_loss=" << num(r.final_eval_loss)
        << (r.failed ? " FAILED: " + r.failure : std::string()) << '\n';
    return r;
  };

  std::map<BackwardMode, std::vector<double>> finals;
  std::map<BackwardMode, std::vector<std::string>> hashes;
  for (BackwardMode m : plan.arms) {
    for (std::uint64_t seed : plan.seeds) {
      TrainConfig cfg = plan.base;
      cfg.backward_mode = m;
      cfg.seed = seed;
      const RunRecord& r = run(cfg, run_stem(m, seed));
      finals[m].push_back(r.final_eval_loss);
      hashes[m].push_back(r.config_hash);
    }
  }
  std::map<std::size_t, std::vector<double>> ablation;
  std::map<std::size_t, std::vector<std::string>> ablation_hashes;
  for (std::size_t g : plan.ablation_g) {
    for (std::uint64_t seed : plan.seeds) {
      TrainConfig cfg = plan.base;
      cfg.backward_mode = BackwardMode::kMxfp4RhtSr;
      cfg.rht_g = g;
      cfg.seed = seed;
      const RunRecord& r =
          run(cfg, "ablation_g" + std::to_string(g) + "_seed" + std::to_string(seed));
      ablation[g].push_back(r.final_eval_loss);
      ablation_hashes[g].push_back(r.config_hash);
    }
  }

  json summary;
  summary["seeds"] = plan.seeds;
  summary["arms"] = json::object();
  std::vector<std::pair<double, std::string>> ranking;
  for (const auto& [m, v] : finals) {
    summary["arms"][std::string(to_string(m))] = group_json(v, hashes[m]);
    ranking.emplace_back(t_interval(v).mean, std::string(to_string(m)));
  }
  std::sort(ranking.begin(), ranking.end());
  summary["ablation_g"] = json::object();
  for (const auto& [g, v] : ablation) {
    summary["ablation_g"][std::to_string(g)] = group_json(v, ablation_hashes[g]);
  }
  const OrderingVerdict verdict = ordering_verdict(finals, ablation);
  json ranked = json::array();
  for (const auto& [_, name] : ranking) ranked.push_back(name);
  summary["verdict"] = {
      {"ranking_by_mean_final_loss", ranked},
      {"exact_within_margin_of_mxfp4_rht_sr", optional_bool(verdict.exact_close)},
      {"exact_margin", kExactMargin},
      {"mxfp4_worse_than_mxfp4_rht_sr_ci_separated", optional_bool(verdict.mxfp4_separated)},
      {"ablation_non_increasing_in_g", optional_bool(verdict.ablation_non_increasing)},
      {"ci_level", 0.95}};
  summary["any_run_failed"] = any_failed;
  write_json(args.out_dir / "summary.json", summary);
  out << "ranking:";
  for (const auto& [mean, name] : ranking) out << ' ' << name << '=' << num(mean);
  out << '\n';
  return any_failed ? kExitInvariant : kExitOk;
}

}  // namespace mx4sim::cli
