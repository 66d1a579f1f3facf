#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace flowtopo {

/// Bad dimensions, parameters or inconsistent inputs.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A sample point lies outside the meshed rectangle.
class OutOfDomainError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sparse factorization broke down. `pivot` is the failing column, or -1 when
/// the backend does not report one.
class SingularSystemError : public std::runtime_error {
 public:
  SingularSystemError(const std::string& what, long pivot)
      : std::runtime_error(what), pivot_(pivot) {}
  long pivot() const noexcept { return pivot_; }

 private:
  long pivot_;
};

/// An iterative procedure ran out of iterations. Carries the residual history.
class NonconvergenceError : public std::runtime_error {
 public:
  NonconvergenceError(const std::string& what, std::vector<double> history)
      : std::runtime_error(what), history_(std::move(history)) {}
  const std::vector<double>& history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

/// Armijo backtracking found no acceptable step. The history holds the
/// rejected trial objective values.
class StalledLineSearchError : public NonconvergenceError {
 public:
  using NonconvergenceError::NonconvergenceError;
};

}  // namespace flowtopo
