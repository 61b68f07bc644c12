#pragma once

#include <stdexcept>
#include <string>

namespace fairij {

/// Bad user-supplied values: dimensions, labels, fractions, config fields.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

/// Schema/CSV mismatches: missing columns, unparseable cells.
class SchemaError : public std::runtime_error {
 public:
  explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

/// Metric evaluation failures, e.g. an empty (s, y) cell.
class EvalError : public std::runtime_error {
 public:
  explicit EvalError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical breakdowns: diverged training, singular solves, recurrence blowup.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Filesystem failures, always carrying the offending path.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fairij
