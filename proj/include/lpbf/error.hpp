// SPDX-FileCopyrightText: Copyright (c) 2026 the lpbf-supportopt authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace lpbf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mesh/geometry dimensions that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid parameter or configuration value. The message starts with the
/// field path, e.g. "process.dt_cool: ...".
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A linear solve failed (factorization, non-convergence, residual check).
class SolverError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered where a finite value is required.
class NumericsError : public Error {
 public:
  using Error::Error;
};

}  // namespace lpbf
