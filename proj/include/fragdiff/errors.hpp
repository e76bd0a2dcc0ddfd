// Copyright (c) 2026 The fragdiff authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace fragdiff {

/// Base class of all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or missing input (files, configs, serialized state).  CLI exit 2.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Numeric-domain failure (ill-conditioned geometry, divergent iteration,
/// insufficient truncation, ...).  CLI exit 3.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace fragdiff
