#pragma once

#include <stdexcept>
#include <string>

namespace pkb {

/// Broad failure class; the CLI maps each one onto an exit code.
enum class ErrorKind { Usage, Data, Numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct UsageError : Error {
  explicit UsageError(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

struct DimensionError : DataError {
  using DataError::DataError;
};

/// Inputs that leave a quantity undefined: zero weight sum, no events, a single class.
struct DegenerateError : DataError {
  using DataError::DataError;
};

struct EmptyPathwayError : DataError {
  using DataError::DataError;
};

struct SchemaError : DataError {
  using DataError::DataError;
};

/// A metric with no defined value, e.g. a C-index without permissible pairs.
struct UndefinedMetricError : DataError {
  using DataError::DataError;
};

struct ParseError : DataError {
  ParseError(const std::string& what, long line)
      : DataError(line > 0 ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  long line() const noexcept { return line_; }

 private:
  long line_;
};

struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

struct IllConditionedError : NumericError {
  using NumericError::NumericError;
};

struct ConvergenceError : NumericError {
  using NumericError::NumericError;
};

}  // namespace pkb
