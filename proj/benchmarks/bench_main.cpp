// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "mx4sim/formats.hpp"
#include "mx4sim/mx.hpp"
#include "mx4sim/qgemm.hpp"
#include "mx4sim/rht.hpp"
#include "mx4sim/rng.hpp"

namespace mx4sim {
namespace {

Matrix gaussian(std::size_t r, std::size_t c, std::uint64_t seed) {
  const CounterStream s(StreamKey{seed, Domain::kData, {}});
  Matrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = s.normal(i);
  return m;
}

void BM_StochasticRoundScalar(benchmark::State& state) {
  const CounterStream u(StreamKey{1});
  std::uint64_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fp4_stochastic(2.3, u.uniform(i++)));
  }
}
BENCHMARK(BM_StochasticRoundScalar);

void BM_Quantize(benchmark::State& state) {
  const auto algo = static_cast<QuantAlgo>(state.range(0));
  const Matrix m = gaussian(256, 1024, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(quantize_matrix(m, algo, StreamKey{3}));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(m.size()));
}
BENCHMARK(BM_Quantize)->Arg(static_cast<int>(QuantAlgo::kReference))
    ->Arg(static_cast<int>(QuantAlgo::kUnbiased));

void BM_EstimateGemm(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const GemmMode mode{Rounding::kStochastic, state.range(1) != 0, 64};
  const Matrix a = gaussian(n, n, 4), b = gaussian(n, n, 5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(estimate_gemm(a, b, mode, GemmKeys::from(StreamKey{6})));
  }
}
BENCHMARK(BM_EstimateGemm)->Args({128, 0})->Args({128, 1})->Args({256, 0})->Args({256, 1});

void BM_ExactGemm(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const Matrix a = gaussian(n, n, 4), b = gaussian(n, n, 5);
  for (auto _ : state) benchmark::DoNotOptimize(exact_gemm(a, b));
}
BENCHMARK(BM_ExactGemm)->Arg(128)->Arg(256);

void BM_RhtDense(benchmark::State& state) {
  RhtSpec spec;
  spec.g = static_cast<std::size_t>(state.range(0));
  const Matrix m = gaussian(64, 1024, 7);
  for (auto _ : state) benchmark::DoNotOptimize(rht_apply(m, Axis::kRow, spec));
}
BENCHMARK(BM_RhtDense)->Arg(32)->Arg(256)->Arg(1024);

void BM_RhtFast(benchmark::State& state) {
  RhtSpec spec;
  spec.g = static_cast<std::size_t>(state.range(0));
  const Matrix m = gaussian(64, 1024, 7);
  for (auto _ : state) benchmark::DoNotOptimize(rht_apply_fast(m, Axis::kRow, spec));
}
BENCHMARK(BM_RhtFast)->Arg(32)->Arg(256)->Arg(1024);

}  // namespace
}  // namespace mx4sim

BENCHMARK_MAIN();
