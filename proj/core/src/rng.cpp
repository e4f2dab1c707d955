// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "mx4sim/rng.hpp"

#include <cmath>
#include <numbers>

namespace mx4sim {

StreamKey StreamKey::with_domain(Domain d) const {
  StreamKey k = *this;
  k.domain = d;
  return k;
}

StreamKey StreamKey::at(std::size_t slot, std::uint64_t value) const {
  StreamKey k = *this;
  k.coords.at(slot) = value;
  return k;
}

StreamKey StreamKey::fork(std::uint64_t tag) const {
  StreamKey k;
  k.seed = mix64(digest() ^ mix64(tag + 0x632be59bd9b4e019ULL));
  k.domain = domain;
  return k;
}

std::uint64_t StreamKey::digest() const {
  std::uint64_t h = mix64(seed + 0x9e3779b97f4a7c15ULL);
  h = mix64(h ^ (static_cast<std::uint64_t>(domain) + 0xd1b54a32d192ed03ULL));
  for (std::size_t i = 0; i < coords.size(); ++i) {
    h = mix64(h + coords[i] * 0xff51afd7ed558ccdULL + (i + 1));
  }
  return h;
}

CounterStream::CounterStream(const StreamKey& key, std::uint64_t substream)
    : base_(mix64(key.digest() ^ mix64(substream))) {}

double CounterStream::normal(std::uint64_t index) const {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform(2 * index);
  const double u2 = uniform(2 * index + 1);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

double uniform01(const StreamKey& key) { return CounterStream(key).uniform(0); }

std::vector<std::int8_t> sign_vector(const StreamKey& key, std::size_t g) {
  const CounterStream stream(key.with_domain(Domain::kSign));
  std::vector<std::int8_t> s(g);
  for (std::size_t i = 0; i < g; ++i) {
    s[i] = static_cast<std::int8_t>(stream.sign(i));
  }
  return s;
}

}  // namespace mx4sim
