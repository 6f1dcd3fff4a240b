#pragma once

#include <stdexcept>
#include <string>

namespace gztreg {

// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct NonFiniteError : Error {
  explicit NonFiniteError(const std::string& msg) : Error(msg) {}
};

struct NoConvergenceError : Error {
  explicit NoConvergenceError(const std::string& msg) : Error(msg) {}
};

struct NotPositiveDefiniteError : Error {
  explicit NotPositiveDefiniteError(const std::string& msg) : Error(msg) {}
};

struct InvalidCorrelationError : Error {
  explicit InvalidCorrelationError(const std::string& msg) : Error(msg) {}
};

struct BadLengthError : Error {
  explicit BadLengthError(const std::string& msg) : Error(msg) {}
};

struct MaxIterationsError : Error {
  explicit MaxIterationsError(const std::string& msg) : Error(msg) {}
};

struct BadPermutationError : Error {
  explicit BadPermutationError(const std::string& msg) : Error(msg) {}
};

struct MissingCovariateError : Error {
  explicit MissingCovariateError(const std::string& msg) : Error(msg) {}
};

struct EmptyGroupError : Error {
  explicit EmptyGroupError(const std::string& msg) : Error(msg) {}
};

struct InconsistentTypesError : Error {
  explicit InconsistentTypesError(const std::string& msg) : Error(msg) {}
};

struct SingularInformationError : Error {
  explicit SingularInformationError(const std::string& msg) : Error(msg) {}
};

struct NotNestedError : Error {
  explicit NotNestedError(const std::string& msg) : Error(msg) {}
};

struct NegativeStatisticError : Error {
  explicit NegativeStatisticError(const std::string& msg) : Error(msg) {}
};

struct DegenerateSEError : Error {
  explicit DegenerateSEError(const std::string& msg) : Error(msg) {}
};

struct BadDesignError : Error {
  explicit BadDesignError(const std::string& msg) : Error(msg) {}
};

struct ParseError : Error {
  explicit ParseError(const std::string& msg) : Error(msg), line(0) {}
  ParseError(const std::string& msg, long line)
      : Error(msg + " (line " + std::to_string(line) + ")"), line(line) {}
  long line;
};

}  // namespace gztreg
