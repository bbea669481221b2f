#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace artemis {

/// Raised when a caller breaks an operation's precondition (shapes, ranges).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a computation produces a non-finite or exploding value.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::ptrdiff_t step = -1)
      : std::runtime_error(what), step_(step) {}
  std::ptrdiff_t step() const noexcept { return step_; }

 private:
  std::ptrdiff_t step_;
};

/// Raised by iterative solvers that exhaust their budget. Carries the best
/// iterate seen and the final stationarity residual.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> last_iterate, double residual)
      : std::runtime_error(what), last_(std::move(last_iterate)), residual_(residual) {}
  const std::vector<double>& last_iterate() const noexcept { return last_; }
  double residual() const noexcept { return residual_; }

 private:
  std::vector<double> last_;
  double residual_;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractViolation(msg);
}

}  // namespace artemis
