// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef MX4SIM_HASH_HPP_
#define MX4SIM_HASH_HPP_

#include <string>
#include <string_view>

namespace mx4sim {

// Lowercase hex SHA-1 of `text` framed as a git blob ("blob <n>\0" + text),
// so `git hash-object` on the same bytes gives the same digest.
std::string git_blob_hash(std::string_view text);

}  // namespace mx4sim

#endif  // MX4SIM_HASH_HPP_
