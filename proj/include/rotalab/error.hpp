// SPDX-License-Identifier: Apache-2.0
//
// Error types shared by every rotalab module.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rotalab {

enum class ErrorKind {
  invalid_dimension,
  invalid_spec,
  length_mismatch,
  decomposition_failure,
  poisoned_state,
  refused,
  config,
  io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised by svd_full when the Jacobi sweep budget is exhausted.
class DecompositionError : public Error {
 public:
  DecompositionError(const std::string& what, double residual)
      : Error(ErrorKind::decomposition_failure, what), residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Raised when a gradient carries NaN/Inf; the optimizer state is untouched.
class PoisonedStateError : public Error {
 public:
  PoisonedStateError(const std::string& what, std::size_t index)
      : Error(ErrorKind::poisoned_state, what), index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// Configuration problems; line/column are 1-based, 0 when unknown.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& what, std::size_t line = 0,
              std::size_t column = 0)
      : Error(ErrorKind::config, format(what, line, column)),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  static std::string format(const std::string& what, std::size_t line,
                            std::size_t column) {
    if (line == 0) return what;
    return "line " + std::to_string(line) + ", column " +
           std::to_string(column) + ": " + what;
  }

  std::size_t line_;
  std::size_t column_;
};

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) throw Error(kind, what);
}

}  // namespace rotalab
