// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef MX4SIM_FORMATS_HPP_
#define MX4SIM_FORMATS_HPP_

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace mx4sim {

// Sign/exponent/mantissa float layout. Subnormals are always supported.
struct FpFormat {
  std::string_view name;
  int exp_bits = 0;
  int mantissa_bits = 0;
  int exp_bias = 0;
  // IEEE-style formats reserve the all-ones exponent for Inf/NaN.
  bool reserves_top_exponent = false;
  bool supports_subnormals = true;

  int total_bits() const { return 1 + exp_bits + mantissa_bits; }
  int max_exponent_field() const {
    return (1 << exp_bits) - (reserves_top_exponent ? 2 : 1);
  }
  // Unbiased exponent of the largest normal (emax_elem).
  int emax() const { return max_exponent_field() - exp_bias; }
  double max_normal() const;

  bool operator==(const FpFormat&) const = default;
};

inline constexpr FpFormat kFp64{"FP64", 11, 52, 1023, true};
inline constexpr FpFormat kFp32{"FP32", 8, 23, 127, true};
inline constexpr FpFormat kFp16{"FP16", 5, 10, 15, true};
inline constexpr FpFormat kBf16{"BF16", 8, 7, 127, true};
// OCP E4M3 keeps the top exponent for finite values (only S.1111.111 is NaN).
inline constexpr FpFormat kFp8E4M3{"FP8 E4M3", 4, 3, 7, false};
inline constexpr FpFormat kFp8E5M2{"FP8 E5M2", 5, 2, 15, true};
inline constexpr FpFormat kFp4E2M1{"FP4", 2, 1, 1, false};

std::span<const FpFormat> standard_formats();

// (-1)^S (1 + M/2^m) 2^(E - bias) for E > 0, (-1)^S (M/2^m) 2^(1 - bias) for
// E == 0. Throws std::invalid_argument when a field exceeds its bit width.
double fp_value(unsigned sign, std::uint32_t mantissa_field,
                std::uint32_t exponent_field, const FpFormat& fmt);

// Sorted, symmetric set of finite representable values.
class QuantGrid {
 public:
  // Throws std::invalid_argument unless values are finite, strictly
  // increasing, contain 0 and are symmetric about 0.
  explicit QuantGrid(std::vector<double> values);

  // All finite values of a format with at most 8 bits.
  static QuantGrid from_format(const FpFormat& fmt);
  static const QuantGrid& fp4();

  std::span<const double> values() const { return values_; }
  double min() const { return values_.front(); }
  double max() const { return values_.back(); }
  // Largest gap between consecutive values.
  double delta() const { return delta_; }
  bool contains(double x) const;

  // Largest grid value <= x and smallest grid value >= x.
  // Precondition: min() <= x <= max().
  double floor(double x) const;
  double ceil(double x) const;

  // Index of |v| among the non-negative grid values; used for tie-breaking.
  std::size_t magnitude_index(double v) const;

 private:
  std::vector<double> values_;
  double delta_ = 0.0;
};

// Round to the closest grid value. Out-of-range inputs saturate to +/-max.
// Ties go to the magnitude with even index (FP4: even code). NaN throws
// std::invalid_argument.
double nearest_round(double x, const QuantGrid& grid);

// Returns ceil(x) with probability (x - floor(x)) / (ceil(x) - floor(x)),
// otherwise floor(x); `u` is a uniform draw in [0, 1). Rounding acts on |x|
// and the sign is reapplied, so SR(-x, u) == -SR(x, u). Throws
// std::overflow_error when x lies outside the grid and std::invalid_argument
// on NaN.
double stochastic_round(double x, const QuantGrid& grid, double u);

struct StreamKey;
// Draws u = uniform01(key).
double stochastic_round(double x, const QuantGrid& grid, const StreamKey& key);

// ---------------------------------------------------------------------------
// FP4 E2M1 codes: bit 3 sign, bits 2-1 exponent, bit 0 mantissa.

inline constexpr double kFp4Max = 6.0;

struct Fp4Code {
  std::uint8_t bits = 0;

  bool sign() const { return (bits & 0x8) != 0; }
  std::uint8_t magnitude_index() const { return bits & 0x7; }

  bool operator==(const Fp4Code&) const = default;
};

inline constexpr std::array<double, 8> kFp4Magnitudes = {
    0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0};

// Negative zero decodes to +0.0.
inline double decode(Fp4Code c) {
  const double m = kFp4Magnitudes[c.magnitude_index()];
  return c.sign() && m != 0.0 ? -m : m;
}

// Twice the decoded value as a small integer in [-12, 12].
inline int decode_half_units(Fp4Code c) {
  static constexpr std::array<int, 8> kHalf = {0, 1, 2, 3, 4, 6, 8, 12};
  const int h = kHalf[c.magnitude_index()];
  return c.sign() ? -h : h;
}

// Exact inverse of decode on the FP4 grid; 0.0 and -0.0 map to the +0 code.
// Throws std::invalid_argument for values not on the grid.
Fp4Code encode_fp4(double v);

// Bracketing codes for a magnitude a in [0, 6] and the probability of
// rounding up. For grid points lo == hi and p_up == 0.
struct Fp4Bracket {
  std::uint8_t lo = 0;
  std::uint8_t hi = 0;
  double p_up = 0.0;
};
Fp4Bracket fp4_bracket(double magnitude);

// Fast FP4 paths used by the quantizers; agree with the QuantGrid versions.
Fp4Code fp4_nearest(double x);
Fp4Code fp4_stochastic(double x, double u);

}  // namespace mx4sim

#endif  // MX4SIM_FORMATS_HPP_
