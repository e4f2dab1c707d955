// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

// Binary tensor container. Layout, all integers little-endian:
//   "MX4T" | u16 version | u8 dtype | u8 ndim | u64 dims[ndim] | payload
// FP32/FP64 payloads are IEEE values in row-major order. MXFP4 payloads tile
// the last dimension into 32-element blocks of 17 bytes: the shared exponent
// as a two's-complement byte, then 16 bytes holding two codes each with the
// even element in the low nibble.

#ifndef MX4SIM_CLI_TENSOR_FILE_HPP_
#define MX4SIM_CLI_TENSOR_FILE_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "mx4sim/matrix.hpp"
#include "mx4sim/mx.hpp"

namespace mx4sim::cli {

inline constexpr char kTensorMagic[4] = {'M', 'X', '4', 'T'};
inline constexpr std::uint16_t kTensorVersion = 1;
inline constexpr std::size_t kMxfp4BlockBytes = 17;

enum class DType : std::uint8_t { kFp32 = 0, kFp64 = 1, kMxfp4 = 2 };

std::string to_string(DType d);

class TensorFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Tensor {
  DType dtype = DType::kFp64;
  std::vector<std::uint64_t> dims;
  // FP32/FP64 elements (FP32 values are exactly representable as float).
  std::vector<double> values;
  // MXFP4 blocks, row-major over (leading dims flattened) x last dim / 32.
  std::vector<MxBlock> blocks;

  std::uint64_t element_count() const;
  bool operator==(const Tensor&) const = default;
};

// Throws TensorFileError on a malformed stream: bad magic or version,
// unknown dtype, zero ndim, payload size mismatch or trailing bytes.
Tensor read_tensor(std::istream& in);
void write_tensor(std::ostream& out, const Tensor& t);

Tensor load_tensor(const std::filesystem::path& path);
void save_tensor(const std::filesystem::path& path, const Tensor& t);

// 2-D views: leading dims are flattened into rows, the last dim is cols.
Tensor tensor_from_matrix(const Matrix& m, DType dtype);
Tensor tensor_from_mx(const MxMatrix& m, std::vector<std::uint64_t> dims);
// FP32/FP64 only; throws TensorFileError for MXFP4.
Matrix as_matrix(const Tensor& t);
// MXFP4 only; throws TensorFileError otherwise.
MxMatrix as_mx_matrix(const Tensor& t);

}  // namespace mx4sim::cli

#endif  // MX4SIM_CLI_TENSOR_FILE_HPP_
