#pragma once

#include <stdexcept>
#include <string>

namespace bregcal {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the open domain of a generator (weight side) or of its
/// conjugate (natural-parameter side). Carries the offending value, the
/// interval, and the unit index when the violation came from a vectorized
/// evaluation (-1 otherwise).
class DomainError : public Error {
 public:
  DomainError(const std::string& what, double value, double lo, double hi,
              long index = -1)
      : Error(what), value_(value), lo_(lo), hi_(hi), index_(index) {}

  double value() const noexcept { return value_; }
  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  long index() const noexcept { return index_; }

 private:
  double value_;
  double lo_;
  double hi_;
  long index_;
};

/// Iterative solver ran out of its iteration budget.
class MaxIterationsError : public Error {
 public:
  MaxIterationsError(const std::string& what, double grad_norm)
      : Error(what), grad_norm_(grad_norm) {}
  double grad_norm() const noexcept { return grad_norm_; }

 private:
  double grad_norm_;
};

/// No feasible direction: the line search could not keep all natural
/// parameters inside the dual domain while reducing the gradient.
class InfeasibleError : public Error {
 public:
  InfeasibleError(const std::string& what, double imbalance)
      : Error(what), imbalance_(imbalance) {}
  /// Worst constraint violation at the point where the solver gave up.
  double imbalance() const noexcept { return imbalance_; }

 private:
  double imbalance_;
};

/// A cross-fitting training complement contains a single response class.
class DegenerateFoldError : public Error {
 public:
  using Error::Error;
};

/// A least-squares or IRLS system is singular beyond the ridge fallback.
class SingularFitError : public Error {
 public:
  using Error::Error;
};

/// Requested computation needs unit-level population covariates.
class UnsupportedWithoutFrameError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file: missing column, bad cell, inconsistent ids.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& what, std::string column = {})
      : Error(what), column_(std::move(column)) {}
  const std::string& column() const noexcept { return column_; }

 private:
  std::string column_;
};

/// Invalid argument combinations detected before any numerics run.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

}  // namespace bregcal
