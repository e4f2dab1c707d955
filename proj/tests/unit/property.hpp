// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

// Minimal property-test helpers: seeded generators built on std::mt19937_64,
// deliberately independent of the library's counter-based streams.

#ifndef MX4SIM_TESTS_PROPERTY_HPP_
#define MX4SIM_TESTS_PROPERTY_HPP_

#include <gtest/gtest.h>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mx4sim/matrix.hpp"

namespace mx4sim::prop {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }
  double normal(double sd = 1.0) {
    return std::normal_distribution<double>(0.0, sd)(rng_);
  }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_);
  }
  int integer(int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng_);
  }
  bool coin(double p = 0.5) { return uniform(0.0, 1.0) < p; }

  std::vector<double> normals(std::size_t n, double sd = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = normal(sd);
    return v;
  }
  Matrix matrix(std::size_t r, std::size_t c, double sd = 1.0) {
    return Matrix::from_vector(r, c, normals(r * c, sd));
  }
  // Gaussian entries with roughly a fraction p replaced by +/- big values.
  std::vector<double> with_outliers(std::size_t n, double p, double big) {
    std::vector<double> v = normals(n);
    for (double& x : v) {
      if (coin(p)) x = coin() ? big : -big;
    }
    return v;
  }

 private:
  std::mt19937_64 rng_;
};

// Runs `body(gen, case_index)` for n cases; each case gets its own generator
// so a failure message pins down a reproducible case.
template <typename Body>
void for_all(std::size_t n, std::uint64_t seed, Body body) {
  for (std::size_t i = 0; i < n; ++i) {
    Gen gen(seed * 1000003u + i);
    SCOPED_TRACE("property case " + std::to_string(i) + " seed " + std::to_string(seed));
    body(gen, i);
    if (::testing::Test::HasFatalFailure()) return;
  }
}

}  // namespace mx4sim::prop

#endif  // MX4SIM_TESTS_PROPERTY_HPP_
