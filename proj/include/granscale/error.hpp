// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace granscale {

// Base exception for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A value violates the invariants of the type being constructed.
class InvariantError : public Error {
 public:
  using Error::Error;
};

}  // namespace granscale
