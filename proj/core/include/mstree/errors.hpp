#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mstree {

/// Broad failure class; the CLI maps each to an exit code.
enum class ErrorCategory {
  kValidation,  // bad input, config or shape
  kResource,    // a configured hard cap would be exceeded
  kNumerical,   // degenerate or arbitrage-violating numbers
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(ErrorCategory::kValidation, "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorCategory::kValidation, what) {}
};

class EmptyInputError : public Error {
 public:
  explicit EmptyInputError(const std::string& what) : Error(ErrorCategory::kValidation, what) {}
};

class InsufficientDataError : public Error {
 public:
  explicit InsufficientDataError(const std::string& what)
      : Error(ErrorCategory::kValidation, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::kValidation, what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorCategory::kValidation, what) {}
};

class SpecMismatchError : public Error {
 public:
  explicit SpecMismatchError(const std::string& what) : Error(ErrorCategory::kValidation, what) {}
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ErrorCategory::kNumerical, what) {}
};

class DegenerateError : public Error {
 public:
  explicit DegenerateError(const std::string& what) : Error(ErrorCategory::kNumerical, what) {}
};

class UndefinedMetricError : public Error {
 public:
  explicit UndefinedMetricError(const std::string& what)
      : Error(ErrorCategory::kNumerical, what) {}
};

class ArbitrageError : public Error {
 public:
  explicit ArbitrageError(const std::string& what) : Error(ErrorCategory::kNumerical, what) {}
};

class CalibrationError : public Error {
 public:
  explicit CalibrationError(const std::string& what) : Error(ErrorCategory::kNumerical, what) {}
};

class ResourceLimitError : public Error {
 public:
  explicit ResourceLimitError(const std::string& what) : Error(ErrorCategory::kResource, what) {}
};

}  // namespace mstree
