// Copyright 2026 The mx4sim Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef MX4SIM_ERRORS_HPP_
#define MX4SIM_ERRORS_HPP_

#include <stdexcept>

namespace mx4sim {

// Raised when matrix/vector dimensions violate an operation's contract
// (mismatched inner dims, reduction dim not divisible by the block size).
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace mx4sim

#endif  // MX4SIM_ERRORS_HPP_
