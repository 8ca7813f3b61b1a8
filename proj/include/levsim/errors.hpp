#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace levsim {

/// Root of every error raised by the library. The CLI maps subclasses onto
/// its exit-code catalog.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Coincident loops, dipole at the origin and similar true singularities.
class SingularityError : public Error {
 public:
  using Error::Error;
};

/// Quadrature or iteration that failed to reach its tolerance.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, double achieved_tolerance)
      : Error(what), achieved_tolerance_(achieved_tolerance) {}
  double achieved_tolerance() const noexcept { return achieved_tolerance_; }

 private:
  double achieved_tolerance_;
};

class LinearAlgebraError : public Error {
 public:
  LinearAlgebraError(const std::string& what, double condition_estimate)
      : Error(what), condition_estimate_(condition_estimate) {}
  double condition_estimate() const noexcept { return condition_estimate_; }

 private:
  double condition_estimate_;
};

/// Response-loop discretization produced an indefinite inductance matrix.
class DiscretizationError : public Error {
 public:
  using Error::Error;
};

/// Magnetic force never balances gravity in the searched range.
class NoLevitationError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

class InversionError : public Error {
 public:
  InversionError(const std::string& what, double range_lo, double range_hi)
      : Error(what), range_lo_(range_lo), range_hi_(range_hi) {}
  double range_lo() const noexcept { return range_lo_; }
  double range_hi() const noexcept { return range_hi_; }

 private:
  double range_lo_;
  double range_hi_;
};

/// Malformed input file. `line()` is 1-based, 0 when not tied to a line.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t line)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class NoDataError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

}  // namespace levsim
