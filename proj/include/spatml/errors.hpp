#ifndef SPATML_ERRORS_HPP
#define SPATML_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace spatml {

/* Error taxonomy. Every failure the library raises derives from Error so
 * callers (CLI, cross-validation harness) can report a typed category. */

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
  virtual const char* kind() const { return "error"; }
};

// Invalid argument values (bad quantile level, non-positive range, ...).
class DomainError : public Error {
 public:
  using Error::Error;
  const char* kind() const override { return "domain"; }
};

// Inconsistent configuration (mixed metrics, malformed grids, bad hyper).
class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const override { return "config"; }
};

class DimensionError : public Error {
 public:
  using Error::Error;
  const char* kind() const override { return "dimension"; }
};

// Input lacks the variation an operation needs (constant residuals,
// zero-variance covariate, constant response).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
  const char* kind() const override { return "degenerate-input"; }
};

// A matrix factorization failed (numerically rank deficient covariance).
class NumericalRankError : public Error {
 public:
  using Error::Error;
  const char* kind() const override { return "numerical-rank"; }
};

// File/serialization problems.
class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const override { return "io"; }
};

class SchemaError : public Error {
 public:
  using Error::Error;
  const char* kind() const override { return "schema"; }
};

}  // namespace spatml

#endif  // SPATML_ERRORS_HPP
