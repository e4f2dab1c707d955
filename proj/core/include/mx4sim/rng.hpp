// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

// Counter-based randomness. Every random quantity in the library is a pure
// function of a StreamKey plus an element index, so results never depend on
// evaluation order or thread count.

#ifndef MX4SIM_RNG_HPP_
#define MX4SIM_RNG_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace mx4sim {

enum class Domain : std::uint8_t {
  kDither = 0,  // stochastic-rounding noise
  kSign = 1,    // Hadamard sign vectors
  kData = 2,    // synthetic inputs, initialization, bootstrap resampling
};

struct StreamKey {
  std::uint64_t seed = 0;
  Domain domain = Domain::kDither;
  std::array<std::uint64_t, 4> coords{};

  StreamKey with_domain(Domain d) const;
  // Copy with coords[slot] replaced.
  StreamKey at(std::size_t slot, std::uint64_t value) const;
  // Child key with a fresh seed derived from this key and `tag`; coords reset.
  // Used when a library routine needs several independent sub-streams.
  StreamKey fork(std::uint64_t tag) const;

  std::uint64_t digest() const;

  bool operator==(const StreamKey&) const = default;
};

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Random-access stream: element i is mix64(base + (i + 1) * golden), i.e. a
// SplitMix64 sequence seeded from the key digest.
class CounterStream {
 public:
  explicit CounterStream(const StreamKey& key, std::uint64_t substream = 0);

  std::uint64_t bits(std::uint64_t index) const {
    return mix64(base_ + (index + 1) * kGolden);
  }
  // Uniform in [0, 1) with 53 random bits.
  double uniform(std::uint64_t index) const {
    return static_cast<double>(bits(index) >> 11) * 0x1.0p-53;
  }
  // Standard normal via Box-Muller on elements 2i and 2i+1.
  double normal(std::uint64_t index) const;
  int sign(std::uint64_t index) const {
    return (bits(index) >> 63) ? -1 : 1;
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
  std::uint64_t base_;
};

double uniform01(const StreamKey& key);

// Length-g vector of independent +/-1 entries.
std::vector<std::int8_t> sign_vector(const StreamKey& key, std::size_t g);

}  // namespace mx4sim

#endif  // MX4SIM_RNG_HPP_
