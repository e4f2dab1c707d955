// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "mx4sim/hash.hpp"

#include <openssl/evp.h>

#include <array>
#include <stdexcept>

namespace mx4sim {

std::string git_blob_hash(std::string_view text) {
  std::string blob = "blob " + std::to_string(text.size());
  blob.push_back('\0');
  blob.append(text);
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(blob.data(), blob.size(), md.data(), &len, EVP_sha1(),
                 nullptr) != 1) {
    throw std::runtime_error("git_blob_hash: SHA-1 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[md[i] >> 4]);
    hex.push_back(kHex[md[i] & 0xF]);
  }
  return hex;
}

}  // namespace mx4sim
