// Copyright (c) 2026, The CDWF Authors
// SPDX-License-Identifier: Apache-2.0
//
// Exception types shared across the toolkit. The CLI maps these onto exit codes.

#pragma once

#include <stdexcept>
#include <string>

namespace cdwf {

/// Invalid arguments or configuration values.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Filesystem failures (missing inputs, unwritable outputs).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical routine failed to converge or produced non-finite values.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No candidate configuration fits the trainable-parameter budget.
class InfeasibleBudget : public std::runtime_error {
 public:
  InfeasibleBudget(const std::string& what, double smallest_fraction)
      : std::runtime_error(what), smallest_fraction_(smallest_fraction) {}
  double smallest_feasible_fraction() const noexcept { return smallest_fraction_; }

 private:
  double smallest_fraction_;
};

/// Structural problems reading binary dataset or checkpoint files.
class FormatError : public std::runtime_error {
 public:
  enum class Kind { BadMagic, BadVersion, Truncated, BadHeader };

  FormatError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace cdwf
