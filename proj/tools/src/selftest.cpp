// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

// Fast invariant suite behind `mx4sim selftest`. Each check prints one
// PASS/FAIL line; statistical checks use fixed keys so a run is repeatable.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "mx4sim/cli/commands.hpp"
#include "mx4sim/formats.hpp"
#include "mx4sim/mx.hpp"
#include "mx4sim/qgemm.hpp"
#include "mx4sim/rht.hpp"
#include "mx4sim/rng.hpp"
#include "mx4sim/train.hpp"
#include "mx4sim/variancelab.hpp"

namespace mx4sim::cli {
namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

using Check = std::function<Outcome()>;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

Matrix gaussian(std::size_t r, std::size_t c, std::uint64_t tag) {
  Matrix m(r, c);
  const CounterStream s(StreamKey{7, Domain::kData, {tag}});
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = s.normal(i);
  return m;
}

Outcome fp4_grid() {
  static constexpr double kExpected[16] = {0,  0.5,  1,  1.5,  2,  3,  4,  6,
                                           0, -0.5, -1, -1.5, -2, -3, -4, -6};
  for (std::uint8_t c = 0; c < 16; ++c) {
    const double via_formula =
        fp_value(c >> 3, c & 1u, (c >> 1) & 3u, kFp4E2M1);
    if (decode(Fp4Code{c}) != kExpected[c] || via_formula != kExpected[c]) {
      return {false, "code " + std::to_string(c) + " decodes wrongly"};
    }
  }
  return {true, "16 codes"};
}

Outcome scalar_sr_unbiased() {
  const QuantGrid& grid = QuantGrid::fp4();
  const double xs[] = {0.2, 1.3, 2.25, 3.7, 5.0, -4.9};
  constexpr std::size_t kDraws = 20000;
  double worst = 0.0;
  for (std::size_t p = 0; p < std::size(xs); ++p) {
    const double x = xs[p];
    const CounterStream s(StreamKey{11, Domain::kDither, {p}});
    double sum = 0.0;
    for (std::size_t i = 0; i < kDraws; ++i) sum += stochastic_round(x, grid, s.uniform(i));
    const double var = sr_variance_oracle(std::abs(x), grid);
    const double z = std::abs(sum / kDraws - x) / std::sqrt(var / kDraws);
    worst = std::max(worst, z);
  }
  return {worst < 4.5, "max |z| = " + fmt(worst)};
}

Outcome nearest_saturates() {
  const QuantGrid& grid = QuantGrid::fp4();
  const bool ok = nearest_round(100.0, grid) == 6.0 &&
                  nearest_round(-100.0, grid) == -6.0 &&
                  nearest_round(5.1, grid) == 6.0 && nearest_round(3.0, grid) == 3.0;
  return {ok, ok ? "saturation and grid points" : "nearest rounding mismatch"};
}

Outcome block_unbiased() {
  std::vector<double> v(kMxBlockSize);
  const CounterStream s(StreamKey{3, Domain::kData, {}});
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.1 * s.normal(i);
  v[5] = 9.0;  // dominating outlier
  constexpr std::size_t kDraws = 20000;
  std::vector<double> sum(v.size()), sq(v.size());
  for (std::size_t d = 0; d < kDraws; ++d) {
    const auto deq = dequantize_block(
        quantize_block_unbiased(v, StreamKey{5, Domain::kDither, {d}}));
    for (std::size_t i = 0; i < v.size(); ++i) {
      sum[i] += deq[i];
      sq[i] += deq[i] * deq[i];
    }
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double mean = sum[i] / kDraws;
    const double var = std::max(sq[i] / kDraws - mean * mean, 1e-300);
    const double target = kUnbiasedPrescale * v[i];
    const double z = var <= 1e-24 ? (mean == target ? 0.0 : 1e9)
                                  : std::abs(mean - target) / std::sqrt(var / kDraws);
    worst = std::max(worst, z);
  }
  Matrix m = Matrix::from_vector(1, v.size(), v);
  const auto q = quantize_matrix(m, QuantAlgo::kUnbiased, StreamKey{});
  const bool ok = worst < 4.5 && q.stats.overflow_events == 0;
  return {ok, "max |z| = " + fmt(worst) +
                  ", overflow events = " + std::to_string(q.stats.overflow_events)};
}

Outcome reference_clipping() {
  const Matrix m = gaussian(256, 256, 1);
  const QuantStats s = measure_clipping(m);
  const bool ok = s.clipped_fraction >= 0.015 && s.clipped_fraction <= 0.05;
  return {ok, "clipped_fraction = " + fmt(s.clipped_fraction)};
}

// Elementwise z-scores of the corrected SR GEMM mean against the exact
// product. A wrong output correction shifts every mean by a fixed fraction.
Outcome sr_gemm_unbiased(bool use_rht) {
  const Matrix a = gaussian(32, 64, 2);
  const Matrix b = gaussian(64, 32, 3);
  const Matrix exact = exact_gemm(a, b);
  const GemmMode mode{Rounding::kStochastic, use_rht, 64};
  constexpr std::size_t kDraws = 400;
  Matrix sum(32, 32), sq(32, 32);
  for (std::size_t d = 0; d < kDraws; ++d) {
    const GemmKeys keys{StreamKey{9, Domain::kSign, {}},
                        StreamKey{9, Domain::kDither, {d}}};
    const Matrix e = estimate_gemm(a, b, mode, keys);
    for (std::size_t i = 0; i < e.size(); ++i) {
      sum.data()[i] += e.data()[i];
      sq.data()[i] += e.data()[i] * e.data()[i];
    }
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < exact.size(); ++i) {
    const double mean = sum.data()[i] / kDraws;
    const double var = sq.data()[i] / kDraws - mean * mean;
    worst = std::max(worst, std::abs(mean - exact.data()[i]) /
                                std::sqrt(std::max(var, 1e-300) / kDraws));
  }
  // 1024 elements: the largest |z| of a correct estimator stays near 3.5.
  return {worst < 5.0, "max |z| over 1024 entries = " + fmt(worst)};
}

Outcome rht_orthonormal() {
  double worst = 0.0;
  for (std::size_t g : {32u, 64u, 128u}) {
    const HadamardMatrix h = hadamard(g);
    const Matrix hht = exact_gemm(h.entries, h.entries.transposed());
    worst = std::max(worst, max_abs_diff(hht, Matrix::identity(g)));
  }
  return {worst < 1e-12, "max |H H^T - I| = " + fmt(worst)};
}

Outcome rht_preserves_products() {
  const Matrix a = gaussian(128, 64, 4);
  const Matrix b = gaussian(128, 48, 5);
  const RhtSpec spec{64, StreamKey{1, Domain::kSign, {}}};
  const Matrix ta = rht_apply(a, Axis::kColumn, spec);
  const Matrix tb = rht_apply(b, Axis::kColumn, spec);
  const double err = relative_frobenius_error(exact_gemm(ta.transposed(), tb),
                                              exact_gemm(a.transposed(), b));
  const Matrix back =
      rht_apply(ta, Axis::kColumn, RhtSpec{64, spec.sign_key, Direction::kInverse});
  const double inv = max_abs_diff(back, a);
  return {err < 1e-10 && inv < 1e-10,
          "product rel err = " + fmt(err) + ", inverse err = " + fmt(inv)};
}

Outcome tail_bound() {
  const Matrix g = gaussian(1, 64, 8);
  const std::vector<double> x(g.data().begin(), g.data().end());
  const double thresholds[] = {3.5, 4.0, 4.5};
  const auto rows = tail_bound_check(x, thresholds, 2000, StreamKey{2, Domain::kSign, {}});
  for (const auto& r : rows) {
    if (!r.within()) return {false, "exceedance above bound at a = " + fmt(r.threshold)};
  }
  return {true, "3 thresholds within bound"};
}

// Thread count must not change results.
Outcome thread_invariance() {
  const Matrix a = gaussian(64, 128, 6);
  const Matrix b = gaussian(128, 64, 7);
  const GemmMode mode{Rounding::kStochastic, true, 64};
  const GemmKeys keys = GemmKeys::from(StreamKey{4, Domain::kDither, {}});
  const char* prev = std::getenv("MX4SIM_THREADS");
  const std::string saved = prev ? prev : "";
  setenv("MX4SIM_THREADS", "1", 1);
  const Matrix one = estimate_gemm(a, b, mode, keys);
  setenv("MX4SIM_THREADS", "8", 1);
  const Matrix eight = estimate_gemm(a, b, mode, keys);
  if (prev) {
    setenv("MX4SIM_THREADS", saved.c_str(), 1);
  } else {
    unsetenv("MX4SIM_THREADS");
  }
  return {one == eight, one == eight ? "identical at 1 and 8 threads" : "results differ"};
}

Outcome train_reproducible() {
  TrainConfig cfg;
  cfg.dims = {64, 64, 32};
  cfg.teacher_dims = {64, 32, 32};
  cfg.steps = 3;
  cfg.batch = 64;
  cfg.eval_batch = 64;
  const RunRecord r1 = train_run(cfg);
  const RunRecord r2 = train_run(cfg);
  const bool ok = !r1.failed && r1.losses == r2.losses &&
                  r1.final_eval_loss == r2.final_eval_loss;
  return {ok, ok ? "bit-identical reruns" : "reruns differ"};
}

}  // namespace

int cmd_selftest(const SelftestArgs& args, std::ostream& out) {
  std::unique_ptr<testing::ScopedCorrectionOverride> fault;
  if (args.inject_correction_fault) {
    fault = std::make_unique<testing::ScopedCorrectionOverride>(1.0);
    out << "fault injected: stochastic-mode output correction set to 1\n";
  }
  const std::vector<std::pair<std::string, Check>> checks = {
      {"fp4_grid_exact", fp4_grid},
      {"nearest_round_saturates", nearest_saturates},
      {"scalar_sr_unbiased", scalar_sr_unbiased},
      {"unbiased_block_mean", block_unbiased},
      {"reference_clipping_rate", reference_clipping},
      {"sr_gemm_unbiased", [] { return sr_gemm_unbiased(false); }},
      {"rht_sr_gemm_unbiased", [] { return sr_gemm_unbiased(true); }},
      {"hadamard_orthonormal", rht_orthonormal},
      {"rht_preserves_products", rht_preserves_products},
      {"rht_tail_bound", tail_bound},
      {"thread_count_invariance", thread_invariance},
      {"train_reproducible", train_reproducible},
  };
  std::size_t failed = 0;
  for (const auto& [name, check] : checks) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    out << (o.ok ? "PASS " : "FAIL ") << name << ": " << o.detail << '\n';
    failed += o.ok ? 0 : 1;
  }
  out << (failed == 0 ? "selftest passed" : "selftest FAILED: " + std::to_string(failed) + " invariant(s)")
      << '\n';
  return failed == 0 ? kExitOk : kExitInvariant;
}

}  // namespace mx4sim::cli
