// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "mx4sim/rht.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mx4sim/errors.hpp"
#include "mx4sim/parallel.hpp"

namespace mx4sim {

bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

HadamardMatrix hadamard(std::size_t g) {
  if (!is_power_of_two(g)) {
    throw std::invalid_argument("hadamard: size must be a power of two");
  }
  // Sylvester doubling on +/-1 entries, then one orthonormal rescale.
  std::vector<double> h{1.0};
  for (std::size_t n = 1; n < g; n *= 2) {
    std::vector<double> next(4 * n * n);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        const double v = h[r * n + c];
        next[r * 2 * n + c] = v;
        next[r * 2 * n + c + n] = v;
        next[(r + n) * 2 * n + c] = v;
        next[(r + n) * 2 * n + c + n] = -v;
      }
    }
    h = std::move(next);
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(g));
  for (double& v : h) v *= scale;
  return HadamardMatrix{g, Matrix::from_vector(g, g, std::move(h))};
}

void fwht_orthonormal(std::span<double> v) {
  if (!is_power_of_two(v.size())) {
    throw std::invalid_argument("fwht_orthonormal: length must be a power of two");
  }
  const std::size_t n = v.size();
  for (std::size_t h = 1; h < n; h *= 2) {
    for (std::size_t i = 0; i < n; i += 2 * h) {
      for (std::size_t j = i; j < i + h; ++j) {
        const double a = v[j];
        const double b = v[j + h];
        v[j] = a + b;
        v[j + h] = a - b;
      }
    }
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (double& x : v) x *= scale;
}

void validate_gemm_block(std::size_t g) {
  if (!is_power_of_two(g) || g % 32 != 0 || g > kMaxRhtBlock) {
    throw std::invalid_argument("RHT block size must be a power of two, a "
                                "multiple of 32 and at most 1024 (got " +
                                std::to_string(g) + ")");
  }
}

std::vector<std::int8_t> segment_signs(const RhtSpec& spec, std::size_t j) {
  if (spec.identity_signs) return std::vector<std::int8_t>(spec.g, 1);
  return sign_vector(spec.sign_key.fork(j), spec.g);
}

namespace {

std::size_t axis_length(const Matrix& m, Axis axis) {
  return axis == Axis::kRow ? m.cols() : m.rows();
}

void check_spec(const Matrix& m, Axis axis, const RhtSpec& spec) {
  if (!is_power_of_two(spec.g)) {
    throw std::invalid_argument("RHT block size must be a power of two");
  }
  if (axis_length(m, axis) % spec.g != 0) {
    throw ShapeError("RHT: transformed axis length " +
                     std::to_string(axis_length(m, axis)) +
                     " is not a multiple of block size " +
                     std::to_string(spec.g));
  }
}

// Applies `segment_fn(buffer, signs)` to every length-g segment along the
// chosen axis. Segments are independent, so the split across threads does
// not affect results.
template <typename SegmentFn>
Matrix for_each_segment(const Matrix& m, Axis axis, const RhtSpec& spec,
                        SegmentFn segment_fn) {
  check_spec(m, axis, spec);
  const std::size_t g = spec.g;
  const std::size_t n_seg = axis_length(m, axis) / g;
  const std::size_t lines = axis == Axis::kRow ? m.rows() : m.cols();
  std::vector<std::vector<std::int8_t>> signs(n_seg);
  for (std::size_t j = 0; j < n_seg; ++j) signs[j] = segment_signs(spec, j);

  Matrix out(m.rows(), m.cols());
  parallel_for(lines, [&](std::size_t begin, std::size_t end) {
    std::vector<double> in(g);
    std::vector<double> res(g);
    for (std::size_t line = begin; line < end; ++line) {
      for (std::size_t j = 0; j < n_seg; ++j) {
        for (std::size_t t = 0; t < g; ++t) {
          const std::size_t k = j * g + t;
          in[t] = axis == Axis::kRow ? m(line, k) : m(k, line);
        }
        segment_fn(in, res, signs[j]);
        for (std::size_t t = 0; t < g; ++t) {
          const std::size_t k = j * g + t;
          (axis == Axis::kRow ? out(line, k) : out(k, line)) = res[t];
        }
      }
    }
  });
  return out;
}

}  // namespace

Matrix rht_apply(const Matrix& m, Axis axis, const RhtSpec& spec) {
  check_spec(m, axis, spec);
  const HadamardMatrix h = hadamard(spec.g);
  const std::size_t g = spec.g;
  const bool forward = spec.direction == Direction::kForward;
  return for_each_segment(
      m, axis, spec,
      [&](std::vector<double>& in, std::vector<double>& res,
          const std::vector<std::int8_t>& s) {
        if (forward) {
          for (std::size_t t = 0; t < g; ++t) in[t] *= s[t];
        }
        for (std::size_t r = 0; r < g; ++r) {
          double acc = 0.0;
          const auto hrow = h.entries.row(r);  // H is symmetric: H^T = H
          for (std::size_t t = 0; t < g; ++t) acc += hrow[t] * in[t];
          res[r] = acc;
        }
        if (!forward) {
          for (std::size_t t = 0; t < g; ++t) res[t] *= s[t];
        }
      });
}

Matrix rht_apply_fast(const Matrix& m, Axis axis, const RhtSpec& spec) {
  const std::size_t g = spec.g;
  const bool forward = spec.direction == Direction::kForward;
  return for_each_segment(
      m, axis, spec,
      [&](std::vector<double>& in, std::vector<double>& res,
          const std::vector<std::int8_t>& s) {
        res = in;
        if (forward) {
          for (std::size_t t = 0; t < g; ++t) res[t] *= s[t];
        }
        fwht_orthonormal(res);
        if (!forward) {
          for (std::size_t t = 0; t < g; ++t) res[t] *= s[t];
        }
      });
}

std::vector<TailBoundRow> tail_bound_check(std::span<const double> x,
                                           std::span<const double> thresholds,
                                           std::size_t n_trials,
                                           const StreamKey& key) {
  const std::size_t g = x.size();
  if (g < 32 || !is_power_of_two(g)) {
    throw std::invalid_argument("tail_bound_check: length must be a power of two >= 32");
  }
  double norm2 = 0.0;
  for (double v : x) norm2 += v * v;

  std::vector<std::size_t> hits(thresholds.size(), 0);
  std::vector<double> y(g);
  for (std::size_t t = 0; t < n_trials; ++t) {
    const auto s = sign_vector(key.fork(t), g);
    for (std::size_t i = 0; i < g; ++i) y[i] = s[i] * x[i];
    fwht_orthonormal(y);
    double peak = 0.0;
    for (double v : y) peak = std::max(peak, std::abs(v));
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
      if (peak >= thresholds[k]) hits[k] += 1;
    }
  }

  std::vector<TailBoundRow> rows;
  rows.reserve(thresholds.size());
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    TailBoundRow row;
    row.threshold = thresholds[k];
    row.empirical = n_trials ? static_cast<double>(hits[k]) / n_trials : 0.0;
    if (norm2 > 0.0) {
      const double a = thresholds[k];
      row.bound = std::min(
          1.0, 2.0 * g * std::exp(-a * a * g / (2.0 * norm2)));
    }
    row.slack = n_trials
                    ? 3.0 * std::sqrt(row.bound * (1.0 - row.bound) / n_trials)
                    : 0.0;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace mx4sim
