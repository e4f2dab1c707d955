// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "mx4sim/mx.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mx4sim/errors.hpp"

namespace mx4sim {

namespace {

void require_block(std::span<const double> v) {
  if (v.size() != kMxBlockSize) {
    throw ShapeError("MX block must hold exactly 32 values");
  }
}

struct BlockScale {
  int scale_exp = 0;  // clamped
  bool saturated = false;
  bool all_zero = true;
};

BlockScale block_scale(std::span<const double> v) {
  BlockScale s;
  const int raw = shared_exponent(v);
  s.all_zero = std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
  s.scale_exp = std::clamp(raw, -kMaxScaleExp, kMaxScaleExp);
  s.saturated = s.scale_exp != raw;
  return s;
}

// Per-block accumulator shared by the block and matrix entry points.
struct StatsAccumulator {
  std::size_t entries = 0;
  std::size_t clipped = 0;
  std::size_t reference_clipped = 0;
  std::size_t blocks = 0;
  double scale_sum = 0.0;
  std::size_t saturations = 0;
  std::size_t overflows = 0;

  QuantStats finish(std::string_view label) const {
    QuantStats q;
    q.label = std::string(label);
    q.num_blocks = blocks;
    if (entries > 0) {
      q.clipped_fraction = static_cast<double>(clipped) / entries;
      q.reference_clipped_fraction =
          static_cast<double>(reference_clipped) / entries;
    }
    if (blocks > 0) q.mean_scale_exp = scale_sum / blocks;
    q.scale_saturations = saturations;
    q.overflow_events = overflows;
    return q;
  }
};

MxBlock reference_block(std::span<const double> v, StatsAccumulator& acc) {
  const BlockScale s = block_scale(v);
  MxBlock b;
  acc.blocks += 1;
  acc.entries += v.size();
  acc.saturations += s.saturated ? 1 : 0;
  if (s.all_zero) return b;
  b.scale_exp = static_cast<std::int8_t>(s.scale_exp);
  acc.scale_sum += s.scale_exp;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double scaled = std::ldexp(v[i], -s.scale_exp);
    if (std::abs(scaled) > kFp4Max) {
      acc.clipped += 1;
      acc.reference_clipped += 1;
    }
    b.codes[i] = fp4_nearest(scaled);
  }
  return b;
}

MxBlock unbiased_block(std::span<const double> v, const CounterStream& stream,
                       std::uint64_t first_index, StatsAccumulator& acc) {
  const BlockScale s = block_scale(v);
  MxBlock b;
  acc.blocks += 1;
  acc.entries += v.size();
  acc.saturations += s.saturated ? 1 : 0;
  if (s.all_zero) return b;
  b.scale_exp = static_cast<std::int8_t>(s.scale_exp);
  acc.scale_sum += s.scale_exp;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double scaled = std::ldexp(v[i], -s.scale_exp);
    if (std::abs(scaled) > kFp4Max) acc.reference_clipped += 1;
    double pre = kUnbiasedPrescale * scaled;
    if (std::abs(pre) > kFp4Max) {
      acc.overflows += 1;
      pre = std::copysign(kFp4Max, pre);
    }
    b.codes[i] = fp4_stochastic(pre, stream.uniform(first_index + i));
  }
  return b;
}

}  // namespace

double MxBlock::scale() const { return std::ldexp(1.0, scale_exp); }

int shared_exponent(std::span<const double> group, int emax) {
  double m = 0.0;
  for (double x : group) {
    if (!std::isfinite(x)) {
      throw std::invalid_argument("MX quantization: non-finite input");
    }
    m = std::max(m, std::abs(x));
  }
  if (m == 0.0) return 0;
  int e = 0;
  std::frexp(m, &e);  // m = f * 2^e with f in [0.5, 1)
  return (e - 1) - emax;
}

ReferenceBlockResult quantize_block_reference(std::span<const double> v) {
  require_block(v);
  StatsAccumulator acc;
  ReferenceBlockResult out;
  out.block = reference_block(v, acc);
  out.stats = acc.finish("reference");
  return out;
}

MxBlock quantize_block_unbiased(std::span<const double> v,
                                const StreamKey& key) {
  require_block(v);
  StatsAccumulator acc;
  return unbiased_block(v, CounterStream(key), 0, acc);
}

std::array<double, kMxBlockSize> dequantize_block(const MxBlock& b) {
  std::array<double, kMxBlockSize> out{};
  for (std::size_t i = 0; i < kMxBlockSize; ++i) {
    out[i] = std::ldexp(decode(b.codes[i]), b.scale_exp);
  }
  return out;
}

MxQuantized quantize_matrix(const Matrix& m, QuantAlgo algo,
                            const StreamKey& key) {
  if (m.cols() % kMxBlockSize != 0) {
    throw ShapeError("quantize_matrix: column count must be a multiple of 32");
  }
  MxQuantized out;
  out.matrix.rows = m.rows();
  out.matrix.cols = m.cols();
  out.matrix.blocks.reserve(m.rows() * m.cols() / kMxBlockSize);
  const CounterStream stream(key);
  StatsAccumulator acc;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); c += kMxBlockSize) {
      const auto group = row.subspan(c, kMxBlockSize);
      if (algo == QuantAlgo::kReference) {
        out.matrix.blocks.push_back(reference_block(group, acc));
      } else {
        out.matrix.blocks.push_back(
            unbiased_block(group, stream, r * m.cols() + c, acc));
      }
    }
  }
  out.stats = acc.finish(algo == QuantAlgo::kReference ? "reference" : "unbiased");
  return out;
}

Matrix dequantize(const MxMatrix& m) {
  Matrix out(m.rows, m.cols);
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t j = 0; j < m.blocks_per_row(); ++j) {
      const auto vals = dequantize_block(m.block(r, j));
      std::copy(vals.begin(), vals.end(),
                out.row(r).begin() + static_cast<std::ptrdiff_t>(j * kMxBlockSize));
    }
  }
  return out;
}

QuantStats measure_clipping(const Matrix& m, std::string_view label) {
  if (m.cols() % kMxBlockSize != 0) {
    throw ShapeError("measure_clipping: column count must be a multiple of 32");
  }
  StatsAccumulator acc;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); c += kMxBlockSize) {
      const auto group = row.subspan(c, kMxBlockSize);
      const BlockScale s = block_scale(group);
      acc.blocks += 1;
      acc.entries += group.size();
      acc.saturations += s.saturated ? 1 : 0;
      if (s.all_zero) continue;
      acc.scale_sum += s.scale_exp;
      for (double x : group) {
        if (std::abs(std::ldexp(x, -s.scale_exp)) > kFp4Max) acc.clipped += 1;
      }
    }
  }
  acc.reference_clipped = acc.clipped;
  return acc.finish(label);
}

}  // namespace mx4sim
