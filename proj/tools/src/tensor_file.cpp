// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "mx4sim/cli/tensor_file.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace mx4sim::cli {
namespace {

template <typename U>
void put_le(std::ostream& out, U v) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  }
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(U)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw TensorFileError(std::string("truncated tensor file while reading ") +
                          what);
  }
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    v |= static_cast<U>(bytes[i]) << (8 * i);
  }
  return v;
}

std::uint64_t checked_product(const std::vector<std::uint64_t>& dims) {
  std::uint64_t n = 1;
  for (std::uint64_t d : dims) {
    if (d != 0 && n > std::numeric_limits<std::uint64_t>::max() / d) {
      throw TensorFileError("tensor dims overflow");
    }
    n *= d;
  }
  return n;
}

std::uint64_t last_dim(const Tensor& t) {
  return t.dims.empty() ? 0 : t.dims.back();
}

void check_mx_shape(const std::vector<std::uint64_t>& dims) {
  if (dims.back() % kMxBlockSize != 0) {
    throw TensorFileError("MXFP4 tensor last dim must be a multiple of 32");
  }
}

}  // namespace

std::string to_string(DType d) {
  switch (d) {
    case DType::kFp32: return "fp32";
    case DType::kFp64: return "fp64";
    case DType::kMxfp4: return "mxfp4";
  }
  return "unknown";
}

std::uint64_t Tensor::element_count() const { return checked_product(dims); }

Tensor read_tensor(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 4 || !std::equal(magic.begin(), magic.end(), kTensorMagic)) {
    throw TensorFileError("bad magic: not an MX4T tensor file");
  }
  const auto version = get_le<std::uint16_t>(in, "version");
  if (version != kTensorVersion) {
    throw TensorFileError("unsupported tensor file version " +
                          std::to_string(version));
  }
  const auto dtype_code = get_le<std::uint8_t>(in, "dtype");
  if (dtype_code > 2) {
    throw TensorFileError("unknown dtype code " + std::to_string(dtype_code));
  }
  const auto ndim = get_le<std::uint8_t>(in, "ndim");
  if (ndim == 0) throw TensorFileError("ndim must be at least 1");

  Tensor t;
  t.dtype = static_cast<DType>(dtype_code);
  for (unsigned i = 0; i < ndim; ++i) {
    t.dims.push_back(get_le<std::uint64_t>(in, "dims"));
  }
  const std::uint64_t count = checked_product(t.dims);
  // Reserve conservatively; a lying header fails on the first short read.
  constexpr std::uint64_t kReserveCap = 1u << 20;

  switch (t.dtype) {
    case DType::kFp32:
      t.values.reserve(std::min(count, kReserveCap));
      for (std::uint64_t i = 0; i < count; ++i) {
        t.values.push_back(
            std::bit_cast<float>(get_le<std::uint32_t>(in, "payload")));
      }
      break;
    case DType::kFp64:
      t.values.reserve(std::min(count, kReserveCap));
      for (std::uint64_t i = 0; i < count; ++i) {
        t.values.push_back(
            std::bit_cast<double>(get_le<std::uint64_t>(in, "payload")));
      }
      break;
    case DType::kMxfp4: {
      check_mx_shape(t.dims);
      const std::uint64_t n_blocks = count / kMxBlockSize;
      t.blocks.reserve(std::min(n_blocks, kReserveCap));
      for (std::uint64_t j = 0; j < n_blocks; ++j) {
        MxBlock b;
        b.scale_exp = std::bit_cast<std::int8_t>(get_le<std::uint8_t>(in, "payload"));
        for (std::size_t k = 0; k < kMxBlockSize / 2; ++k) {
          const auto byte = get_le<std::uint8_t>(in, "payload");
          b.codes[2 * k].bits = byte & 0x0F;
          b.codes[2 * k + 1].bits = static_cast<std::uint8_t>(byte >> 4);
        }
        if (b.scale_exp < -kMaxScaleExp) {
          throw TensorFileError("MXFP4 scale exponent out of range");
        }
        t.blocks.push_back(b);
      }
      break;
    }
  }
  if (in.peek() != std::istream::traits_type::eof()) {
    throw TensorFileError("trailing bytes after tensor payload");
  }
  return t;
}

void write_tensor(std::ostream& out, const Tensor& t) {
  if (t.dims.empty() || t.dims.size() > 255) {
    throw TensorFileError("tensor must have between 1 and 255 dims");
  }
  const std::uint64_t count = t.element_count();
  out.write(kTensorMagic, 4);
  put_le<std::uint16_t>(out, kTensorVersion);
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.dtype));
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.dims.size()));
  for (std::uint64_t d : t.dims) put_le<std::uint64_t>(out, d);

  switch (t.dtype) {
    case DType::kFp32:
    case DType::kFp64:
      if (t.values.size() != count) {
        throw TensorFileError("tensor value count does not match dims");
      }
      for (double v : t.values) {
        if (t.dtype == DType::kFp32) {
          put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        } else {
          put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
        }
      }
      break;
    case DType::kMxfp4:
      check_mx_shape(t.dims);
      if (t.blocks.size() != count / kMxBlockSize) {
        throw TensorFileError("tensor block count does not match dims");
      }
      for (const MxBlock& b : t.blocks) {
        put_le<std::uint8_t>(out, std::bit_cast<std::uint8_t>(b.scale_exp));
        for (std::size_t k = 0; k < kMxBlockSize / 2; ++k) {
          put_le<std::uint8_t>(
              out, static_cast<std::uint8_t>((b.codes[2 * k].bits & 0x0F) |
                                             (b.codes[2 * k + 1].bits << 4)));
        }
      }
      break;
  }
  if (!out) throw TensorFileError("failed to write tensor");
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TensorFileError("cannot open " + path.string());
  return read_tensor(in);
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw TensorFileError("cannot create " + path.string());
  write_tensor(out, t);
}

Tensor tensor_from_matrix(const Matrix& m, DType dtype) {
  if (dtype == DType::kMxfp4) {
    throw TensorFileError("tensor_from_matrix: use tensor_from_mx for MXFP4");
  }
  Tensor t;
  t.dtype = dtype;
  t.dims = {m.rows(), m.cols()};
  t.values.assign(m.data().begin(), m.data().end());
  if (dtype == DType::kFp32) {
    for (double& v : t.values) v = static_cast<float>(v);
  }
  return t;
}

Tensor tensor_from_mx(const MxMatrix& m, std::vector<std::uint64_t> dims) {
  Tensor t;
  t.dtype = DType::kMxfp4;
  t.dims = std::move(dims);
  if (t.dims.empty() || t.dims.back() != m.cols ||
      checked_product(t.dims) != static_cast<std::uint64_t>(m.rows) * m.cols) {
    throw TensorFileError("tensor_from_mx: dims do not match the matrix");
  }
  t.blocks = m.blocks;
  return t;
}

Matrix as_matrix(const Tensor& t) {
  if (t.dtype == DType::kMxfp4) {
    throw TensorFileError("expected an FP32 or FP64 tensor, got mxfp4");
  }
  const std::uint64_t cols = last_dim(t);
  const std::uint64_t rows = cols == 0 ? 0 : t.element_count() / cols;
  return Matrix::from_vector(rows, cols, t.values);
}

MxMatrix as_mx_matrix(const Tensor& t) {
  if (t.dtype != DType::kMxfp4) {
    throw TensorFileError("expected an mxfp4 tensor, got " + to_string(t.dtype));
  }
  MxMatrix m;
  m.cols = last_dim(t);
  m.rows = m.cols == 0 ? 0 : t.element_count() / m.cols;
  m.blocks = t.blocks;
  return m;
}

}  // namespace mx4sim::cli
