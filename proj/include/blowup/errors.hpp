#pragma once

#include <stdexcept>
#include <string>

namespace blowup {

/// Argument outside the domain where a formula is defined (psi_T with T-t >= 1, s <= 0, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Result not representable in double precision.
class RangeError : public std::range_error {
 public:
  using std::range_error::range_error;
};

/// Invalid model or solver configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An iterative method stopped short of its tolerance. Carries what it reached.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double achieved)
      : std::runtime_error(what + " (achieved " + std::to_string(achieved) + ")"),
        achieved_(achieved) {}

  double achieved() const noexcept { return achieved_; }

 private:
  double achieved_;
};

/// Mesh too coarse for the requested measurement.
class ResolutionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A run that was expected to blow up kept finite and bounded.
class NoBlowupError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace blowup
