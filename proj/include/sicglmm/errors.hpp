#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace sicglmm {

// Process exit codes used by the command-line front end.
enum class ExitCode : int {
  success = 0,
  validation = 1,
  numerical = 2,
  non_convergence = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Bad input: wrong dimensions, out-of-support responses, invalid parameters,
/// malformed files or configuration.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ExitCode::validation, what) {}
};

/// Input outside the mathematical domain of an operation (non-finite eta,
/// negative counts, nonpositive predictions).
class DomainError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Requested work exceeds what a method supports (e.g. tensor quadrature at large r).
class CapabilityError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ExitCode::numerical, what) {}
};

/// Working weights fell below the floor at the listed observation indices.
class DegenerateSiteError : public NumericalError {
 public:
  DegenerateSiteError(std::vector<std::size_t> sites, const std::string& what)
      : NumericalError(what), sites_(std::move(sites)) {}
  const std::vector<std::size_t>& sites() const noexcept { return sites_; }

 private:
  std::vector<std::size_t> sites_;
};

class ConvergenceError : public Error {
 public:
  explicit ConvergenceError(const std::string& what) : Error(ExitCode::non_convergence, what) {}
};

}  // namespace sicglmm
