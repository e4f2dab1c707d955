// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "mx4sim/variancelab.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mx4sim/matrix.hpp"
#include "mx4sim/mx.hpp"
#include "mx4sim/parallel.hpp"
#include "mx4sim/qgemm.hpp"
#include "mx4sim/rht.hpp"

namespace mx4sim {

void VarianceSweepConfig::validate() const {
  if (block_sizes.empty() || outlier_props.empty()) {
    throw std::invalid_argument("variance sweep: empty b or p list");
  }
  for (std::size_t b : block_sizes) {
    if (b == 0 || b % kMxBlockSize != 0) {
      throw std::invalid_argument("variance sweep: b must be a positive multiple of 32");
    }
    if (group_size != 0 && b % group_size != 0) {
      throw std::invalid_argument("variance sweep: group_size must divide every b");
    }
    const std::size_t g = rht_g == 0 ? b : rht_g;
    if (!is_power_of_two(g) || b % g != 0) {
      throw std::invalid_argument(
          "variance sweep: Hadamard block must be a power of two dividing b");
    }
  }
  if (group_size != 0 && group_size % kMxBlockSize != 0) {
    throw std::invalid_argument("variance sweep: group_size must be a multiple of 32");
  }
  for (double p : outlier_props) {
    if (!(p >= 0.0 && p < 1.0)) {
      throw std::invalid_argument("variance sweep: p must lie in [0, 1)");
    }
  }
  if (!(outlier_scale >= 0.0)) {
    throw std::invalid_argument("variance sweep: outlier_scale must be >= 0");
  }
  if (n_samples < 2 || inner_draws < 2) {
    throw std::invalid_argument("variance sweep: need >= 2 samples and draws");
  }
  if (!(ci_level > 0.0 && ci_level < 1.0) || bootstrap_resamples == 0) {
    throw std::invalid_argument("variance sweep: bad bootstrap settings");
  }
}

std::vector<double> sample_operand(std::size_t b, double p,
                                   const StreamKey& key, double outlier_scale) {
  const StreamKey data = key.with_domain(Domain::kData);
  const CounterStream base(data, 0);
  const CounterStream coin(data, 1);
  const CounterStream outlier(data, 2);
  const double outlier_sd = std::sqrt(outlier_scale);
  std::vector<double> v(b);
  for (std::size_t i = 0; i < b; ++i) {
    v[i] = base.normal(i);
    if (coin.uniform(i) < p) v[i] += outlier_sd * outlier.normal(i);
  }
  return v;
}

double sr_variance_oracle(double alpha, const QuantGrid& grid) {
  if (std::isnan(alpha) || alpha < grid.min() || alpha > grid.max()) {
    throw std::overflow_error("sr_variance_oracle: alpha outside grid range");
  }
  return (grid.ceil(alpha) - alpha) * (alpha - grid.floor(alpha));
}

SrOperand prepare_sr_operand(std::span<const double> v, std::size_t group) {
  if (group == 0) group = v.size();
  if (group == 0 || v.size() % group != 0) {
    throw std::invalid_argument("prepare_sr_operand: group must divide length");
  }
  SrOperand op;
  op.lo.resize(v.size());
  op.hi.resize(v.size());
  op.p_up.resize(v.size());
  for (std::size_t start = 0; start < v.size(); start += group) {
    const auto g = v.subspan(start, group);
    const int e = std::clamp(shared_exponent(g), -kMaxScaleExp, kMaxScaleExp);
    for (std::size_t i = 0; i < group; ++i) {
      const double pre = kUnbiasedPrescale * std::ldexp(g[i], -e);
      const Fp4Bracket br = fp4_bracket(std::min(std::abs(pre), kFp4Max));
      const double sign = std::signbit(pre) ? -1.0 : 1.0;
      op.lo[start + i] = sign * std::ldexp(kFp4Magnitudes[br.lo], e);
      op.hi[start + i] = sign * std::ldexp(kFp4Magnitudes[br.hi], e);
      op.p_up[start + i] = br.p_up;
    }
  }
  return op;
}

namespace {

double sr_dot_variance(const SrOperand& a, const SrOperand& b,
                       std::size_t draws, const StreamKey& key) {
  const double corr = sr_correction();
  const std::size_t n = a.lo.size();
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t d = 0; d < draws; ++d) {
    const CounterStream sa(key, 2 * d);
    const CounterStream sb(key, 2 * d + 1);
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double qa = sa.uniform(i) < a.p_up[i] ? a.hi[i] : a.lo[i];
      const double qb = sb.uniform(i) < b.p_up[i] ? b.hi[i] : b.lo[i];
      dot += qa * qb;
    }
    const double v = corr * dot;
    const double delta = v - mean;
    mean += delta / static_cast<double>(d + 1);
    m2 += delta * (v - mean);
  }
  return m2 / static_cast<double>(draws - 1);
}

}  // namespace

PairVariance pair_variance(std::span<const double> a, std::span<const double> b,
                           const VarianceSweepConfig& cfg,
                           const StreamKey& pair_key) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("pair_variance: length mismatch");
  }
  PairVariance out;
  const StreamKey dither = pair_key.with_domain(Domain::kDither);
  out.plain = sr_dot_variance(prepare_sr_operand(a, cfg.group_size),
                              prepare_sr_operand(b, cfg.group_size),
                              cfg.inner_draws, dither.fork(0));

  RhtSpec spec;
  spec.g = cfg.rht_g == 0 ? a.size() : cfg.rht_g;
  spec.sign_key = pair_key.with_domain(Domain::kSign);
  const Matrix ta = rht_apply_fast(
      Matrix::from_vector(1, a.size(), {a.begin(), a.end()}), Axis::kRow, spec);
  const Matrix tb = rht_apply_fast(
      Matrix::from_vector(1, b.size(), {b.begin(), b.end()}), Axis::kRow, spec);
  out.rht = sr_dot_variance(prepare_sr_operand(ta.row(0), cfg.group_size),
                            prepare_sr_operand(tb.row(0), cfg.group_size),
                            cfg.inner_draws, dither.fork(1));
  return out;
}

ConfidenceInterval bootstrap_mean_ci(std::span<const double> values,
                                     std::size_t resamples, double level,
                                     const StreamKey& key) {
  if (values.empty() || resamples == 0) return {};
  const std::size_t n = values.size();
  const CounterStream stream(key.with_domain(Domain::kData));
  std::vector<double> means(resamples);
  for (std::size_t r = 0; r < resamples; ++r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto pick = static_cast<std::size_t>(stream.uniform(r * n + i) * n);
      acc += values[std::min(pick, n - 1)];
    }
    means[r] = acc / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  const double alpha = (1.0 - level) / 2.0;
  const auto lo_idx = static_cast<std::size_t>(std::floor(alpha * (resamples - 1)));
  const auto hi_idx = static_cast<std::size_t>(std::ceil((1.0 - alpha) * (resamples - 1)));
  return {means[lo_idx], means[std::min(hi_idx, resamples - 1)]};
}

std::vector<SweepRow> run_sweep(const VarianceSweepConfig& cfg) {
  cfg.validate();
  std::vector<SweepRow> rows;
  for (std::size_t bi = 0; bi < cfg.block_sizes.size(); ++bi) {
    const std::size_t b = cfg.block_sizes[bi];
    for (std::size_t pi = 0; pi < cfg.outlier_props.size(); ++pi) {
      const double p = cfg.outlier_props[pi];
      const StreamKey cell{cfg.seed, Domain::kData, {b, pi, 0, 0}};
      std::vector<double> plain(cfg.n_samples);
      std::vector<double> rht(cfg.n_samples);
      parallel_for(cfg.n_samples, [&](std::size_t begin, std::size_t end) {
        for (std::size_t s = begin; s < end; ++s) {
          const StreamKey pair_key = cell.at(2, s);
          const auto a = sample_operand(b, p, pair_key.at(3, 0), cfg.outlier_scale);
          const auto bb = sample_operand(b, p, pair_key.at(3, 1), cfg.outlier_scale);
          const PairVariance v = pair_variance(a, bb, cfg, pair_key.at(3, 2));
          plain[s] = v.plain;
          rht[s] = v.rht;
        }
      });
      for (int mode = 0; mode < 2; ++mode) {
        const std::vector<double>& vals = mode == 0 ? plain : rht;
        SweepRow row;
        row.b = b;
        row.p = p;
        row.mode = mode == 0 ? "plain" : "rht";
        row.mean_variance =
            std::accumulate(vals.begin(), vals.end(), 0.0) / vals.size();
        const ConfidenceInterval ci = bootstrap_mean_ci(
            vals, cfg.bootstrap_resamples, cfg.ci_level,
            cell.at(2, cfg.n_samples + static_cast<std::uint64_t>(mode)));
        row.ci_low = ci.low;
        row.ci_high = ci.high;
        row.n_samples = cfg.n_samples;
        row.inner_draws = cfg.inner_draws;
        row.seed = cfg.seed;
        rows.push_back(row);
      }
    }
  }
  return rows;
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("loglog_slope: need >= 2 paired points");
  }
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace mx4sim
