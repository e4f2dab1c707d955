// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef MX4SIM_PARALLEL_HPP_
#define MX4SIM_PARALLEL_HPP_

#include <cstddef>
#include <functional>

namespace mx4sim {

// Number of worker threads: hardware concurrency, capped by the
// MX4SIM_THREADS environment variable when it is set to a positive integer.
// Read on every call so tests can vary it within one process.
std::size_t worker_count();

// Splits [0, n) into contiguous chunks and runs fn(begin, end) on each chunk,
// possibly concurrently. Callers must make each index's work independent of
// every other index so results do not depend on the chunking.
void parallel_for(std::size_t n,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace mx4sim

#endif  // MX4SIM_PARALLEL_HPP_
