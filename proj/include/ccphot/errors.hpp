#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ccphot {

// Every failure the library reports derives from Error so callers (the CLI in
// particular) can map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class ConfigurationError : public Error {
 public:
  using Error::Error;
};

class AggregationError : public Error {
 public:
  using Error::Error;
};

class EvaluationError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class LineNotFoundError : public Error {
 public:
  using Error::Error;
};

class ModelInconsistencyError : public Error {
 public:
  using Error::Error;
};

/// Thrown when the normal matrix of a fit is (numerically) singular.
/// direction() is the unit null vector in scaled parameter space.
class DegenerateFitError : public Error {
 public:
  DegenerateFitError(const std::string& what, std::vector<double> direction)
      : Error(what), direction_(std::move(direction)) {}
  const std::vector<double>& direction() const { return direction_; }

 private:
  std::vector<double> direction_;
};

}  // namespace ccphot
