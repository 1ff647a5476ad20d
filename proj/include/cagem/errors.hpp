// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace cagem {

/// Base class for every error raised by the library. The CLI maps the
/// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or lengths that do not agree with each other or with a ModelConfig.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent configuration or flag combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or missing file on disk.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint failed its checksum or version check.
class IntegrityError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// NaN or infinity where a finite number is required. `term` names the
/// quantity that went bad.
class NumericalError : public Error {
 public:
  NumericalError(std::string term, const std::string& what)
      : Error(what), term_(std::move(term)) {}
  const std::string& term() const noexcept { return term_; }

 private:
  std::string term_;
};

}  // namespace cagem
