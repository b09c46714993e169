#pragma once

#include <stdexcept>
#include <string>

namespace ddc {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A precondition on the mathematical domain is violated (e.g. an unstable
/// matrix handed to a Lyapunov solver).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A numerical kernel failed (non-convergent eigenvalue iteration, singular
/// linear system).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// An iterative method exhausted its iteration budget.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, int iterations, double residual)
      : Error(what), iterations_(iterations), residual_(residual) {}
  int iterations() const { return iterations_; }
  double residual() const { return residual_; }

 private:
  int iterations_;
  double residual_;
};

/// Measured data admit no exact explanation.
class ConsistencyError : public Error {
 public:
  ConsistencyError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// Malformed cost/performance specification (indefinite Q, singular R, ...).
class SpecError : public Error {
 public:
  using Error::Error;
};

/// A controller certificate cannot be interpreted (e.g. singular Y).
class CertificateError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace ddc
