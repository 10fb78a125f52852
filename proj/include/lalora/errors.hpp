// Copyright (c) 2026, The lalora Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <stdexcept>
#include <string>

namespace lalora {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Cholesky pivot fell below the conditioning floor.
class NotSpd : public Error {
 public:
  using Error::Error;
};

// A Gram matrix of a LoRA factor is singular; raised wherever the
// closed-form projections need a full-rank factor.
class RankDeficient : public Error {
 public:
  using Error::Error;
};

// NaN/Inf encountered in a numeric pipeline.
class NumericFailure : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace lalora
