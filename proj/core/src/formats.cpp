// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "mx4sim/formats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mx4sim/rng.hpp"

namespace mx4sim {

namespace {

constexpr std::array<FpFormat, 7> kStandardFormats = {
    kFp64, kFp32, kFp16, kBf16, kFp8E4M3, kFp8E5M2, kFp4E2M1};

void require_not_nan(double x, const char* what) {
  if (std::isnan(x)) throw std::invalid_argument(std::string(what) + ": NaN");
}

}  // namespace

std::span<const FpFormat> standard_formats() { return kStandardFormats; }

double FpFormat::max_normal() const {
  const double mant = 2.0 - std::ldexp(1.0, -mantissa_bits);
  // E4M3 gives up its all-ones mantissa at the top exponent to NaN.
  if (!reserves_top_exponent && exp_bits == 4 && mantissa_bits == 3) {
    return std::ldexp(2.0 - 2.0 * std::ldexp(1.0, -mantissa_bits), emax());
  }
  return std::ldexp(mant, emax());
}

double fp_value(unsigned sign, std::uint32_t mantissa_field,
                std::uint32_t exponent_field, const FpFormat& fmt) {
  if (sign > 1) throw std::invalid_argument("fp_value: sign must be 0 or 1");
  if (fmt.mantissa_bits < 32 && mantissa_field >> fmt.mantissa_bits) {
    throw std::invalid_argument("fp_value: mantissa field out of range");
  }
  if (fmt.exp_bits < 32 && exponent_field >> fmt.exp_bits) {
    throw std::invalid_argument("fp_value: exponent field out of range");
  }
  const double frac = std::ldexp(static_cast<double>(mantissa_field),
                                 -fmt.mantissa_bits);
  double mag;
  if (exponent_field == 0) {
    mag = std::ldexp(frac, 1 - fmt.exp_bias);
  } else {
    mag = std::ldexp(1.0 + frac,
                     static_cast<int>(exponent_field) - fmt.exp_bias);
  }
  return sign ? -mag : mag;
}

// --- QuantGrid --------------------------------------------------------------

QuantGrid::QuantGrid(std::vector<double> values) : values_(std::move(values)) {
  if (values_.size() < 2) {
    throw std::invalid_argument("QuantGrid: need at least two values");
  }
  bool has_zero = false;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw std::invalid_argument("QuantGrid: non-finite value");
    }
    if (i > 0 && !(values_[i] > values_[i - 1])) {
      throw std::invalid_argument("QuantGrid: values not strictly increasing");
    }
    if (values_[i] != -values_[values_.size() - 1 - i]) {
      throw std::invalid_argument("QuantGrid: values not symmetric");
    }
    if (values_[i] == 0.0) has_zero = true;
    if (i > 0) delta_ = std::max(delta_, values_[i] - values_[i - 1]);
  }
  if (!has_zero) throw std::invalid_argument("QuantGrid: missing zero");
}

QuantGrid QuantGrid::from_format(const FpFormat& fmt) {
  if (fmt.total_bits() > 8) {
    throw std::invalid_argument("QuantGrid::from_format: format too wide");
  }
  std::vector<double> mags;
  for (std::uint32_t e = 0; e <= static_cast<std::uint32_t>(fmt.max_exponent_field()); ++e) {
    for (std::uint32_t m = 0; m < (1u << fmt.mantissa_bits); ++m) {
      const double v = fp_value(0, m, e, fmt);
      if (v <= fmt.max_normal()) mags.push_back(v);
    }
  }
  std::sort(mags.begin(), mags.end());
  mags.erase(std::unique(mags.begin(), mags.end()), mags.end());
  std::vector<double> values;
  values.reserve(2 * mags.size() - 1);
  for (auto it = mags.rbegin(); it != mags.rend(); ++it) {
    if (*it != 0.0) values.push_back(-*it);
  }
  values.insert(values.end(), mags.begin(), mags.end());
  return QuantGrid(std::move(values));
}

const QuantGrid& QuantGrid::fp4() {
  static const QuantGrid grid = from_format(kFp4E2M1);
  return grid;
}

bool QuantGrid::contains(double x) const {
  return std::binary_search(values_.begin(), values_.end(), x);
}

double QuantGrid::floor(double x) const {
  auto it = std::upper_bound(values_.begin(), values_.end(), x);
  return *std::prev(it);
}

double QuantGrid::ceil(double x) const {
  return *std::lower_bound(values_.begin(), values_.end(), x);
}

std::size_t QuantGrid::magnitude_index(double v) const {
  const auto zero = std::lower_bound(values_.begin(), values_.end(), 0.0);
  const auto it = std::lower_bound(zero, values_.end(), std::abs(v));
  return static_cast<std::size_t>(it - zero);
}

double nearest_round(double x, const QuantGrid& grid) {
  require_not_nan(x, "nearest_round");
  if (x >= grid.max()) return grid.max();
  if (x <= grid.min()) return grid.min();
  const double lo = grid.floor(x);
  const double hi = grid.ceil(x);
  const double dlo = x - lo;
  const double dhi = hi - x;
  if (dlo < dhi) return lo;
  if (dhi < dlo) return hi;
  return grid.magnitude_index(lo) % 2 == 0 ? lo : hi;
}

double stochastic_round(double x, const QuantGrid& grid, double u) {
  require_not_nan(x, "stochastic_round");
  const double a = std::abs(x);
  if (a > grid.max()) {
    throw std::overflow_error("stochastic_round: value outside grid range");
  }
  const double lo = grid.floor(a);
  if (lo == a) return x;
  const double hi = grid.ceil(a);
  const double r = u < (a - lo) / (hi - lo) ? hi : lo;
  return std::signbit(x) ? -r : r;
}

double stochastic_round(double x, const QuantGrid& grid, const StreamKey& key) {
  return stochastic_round(x, grid, uniform01(key));
}

// --- FP4 --------------------------------------------------------------------

Fp4Code encode_fp4(double v) {
  require_not_nan(v, "encode_fp4");
  const double a = std::abs(v);
  for (std::uint8_t i = 0; i < kFp4Magnitudes.size(); ++i) {
    if (kFp4Magnitudes[i] == a) {
      const bool neg = std::signbit(v) && a != 0.0;
      return Fp4Code{static_cast<std::uint8_t>(i | (neg ? 0x8 : 0x0))};
    }
  }
  throw std::invalid_argument("encode_fp4: value not representable in FP4");
}

Fp4Bracket fp4_bracket(double a) {
  // Spacing is 0.5 on [0, 2), 1 on [2, 4), 2 on [4, 6].
  Fp4Bracket b;
  double lo_val;
  double step;
  if (a < 2.0) {
    b.lo = static_cast<std::uint8_t>(a * 2.0);
    lo_val = 0.5 * b.lo;
    step = 0.5;
  } else if (a < 4.0) {
    const int whole = static_cast<int>(a);
    b.lo = static_cast<std::uint8_t>(4 + (whole - 2));
    lo_val = whole;
    step = 1.0;
  } else if (a < 6.0) {
    b.lo = 6;
    lo_val = 4.0;
    step = 2.0;
  } else {
    b.lo = b.hi = 7;
    return b;
  }
  if (a == lo_val) {
    b.hi = b.lo;
    return b;
  }
  b.hi = static_cast<std::uint8_t>(b.lo + 1);
  b.p_up = (a - lo_val) / step;
  return b;
}

Fp4Code fp4_nearest(double x) {
  require_not_nan(x, "fp4_nearest");
  const double a = std::abs(x);
  std::uint8_t idx;
  if (a >= kFp4Max) {
    idx = 7;
  } else {
    const Fp4Bracket b = fp4_bracket(a);
    if (b.lo == b.hi || b.p_up < 0.5) {
      idx = b.lo;
    } else if (b.p_up > 0.5) {
      idx = b.hi;
    } else {
      idx = (b.lo % 2 == 0) ? b.lo : b.hi;
    }
  }
  const bool neg = std::signbit(x) && idx != 0;
  return Fp4Code{static_cast<std::uint8_t>(idx | (neg ? 0x8 : 0x0))};
}

Fp4Code fp4_stochastic(double x, double u) {
  require_not_nan(x, "fp4_stochastic");
  const double a = std::abs(x);
  if (a > kFp4Max) {
    throw std::overflow_error("fp4_stochastic: value outside FP4 range");
  }
  const Fp4Bracket b = fp4_bracket(a);
  const std::uint8_t idx = u < b.p_up ? b.hi : b.lo;
  const bool neg = std::signbit(x) && idx != 0;
  return Fp4Code{static_cast<std::uint8_t>(idx | (neg ? 0x8 : 0x0))};
}

}  // namespace mx4sim
