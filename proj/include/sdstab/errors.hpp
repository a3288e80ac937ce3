#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sdstab {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed expression text. `offset` is the byte offset into the source
/// string at which parsing could not continue.
class SyntaxError : public Error {
 public:
  SyntaxError(const std::string& what, std::size_t offset)
      : Error(what + " (at offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  [[nodiscard]] std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// A name or component index that does not resolve against the declared
/// variable layout.
class UnknownVariable : public Error {
 public:
  using Error::Error;
};

/// A function call with the wrong number of arguments.
class ArityMismatch : public Error {
 public:
  using Error::Error;
};

/// Evaluation hit a guarded operation outside its domain (division by zero,
/// ln of a non-positive value, fractional power of a negative base, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// The flow left the admissible region before the requested time: the state
/// norm crossed the ceiling or the adaptive step underflowed. This is an
/// expected outcome near finite escape times, not a solver failure.
class FiniteEscape : public Error {
 public:
  FiniteEscape(const std::string& what, double time_reached)
      : Error(what), time_reached_(time_reached) {}

  [[nodiscard]] double time_reached() const noexcept { return time_reached_; }

 private:
  double time_reached_;
};

/// The integrator exhausted its step budget without reaching the target time.
class MaxStepsExceeded : public Error {
 public:
  using Error::Error;
};

/// Requested tableau name is not a builtin.
class UnknownTableau : public Error {
 public:
  using Error::Error;
};

/// The vector field is not of the control-affine form g(x) + u required for
/// controller matching.
class NotControlAffine : public Error {
 public:
  using Error::Error;
};

/// Certificate fitting failed: validation kept failing down to the period
/// floor, or the data admit no certificate of the requested shape.
class NoCertificate : public Error {
 public:
  using Error::Error;
};

/// No sampling period in the searched range satisfies the certificate.
class NoAdmissiblePeriod : public Error {
 public:
  using Error::Error;
};

/// Certificate transfer parameters violate 0 < eta < delta < 1.
class ParameterOrder : public Error {
 public:
  using Error::Error;
};

/// Re-integration of a recorded trajectory disagrees with the recorded
/// samples beyond the oracle tolerance; the trajectory and the model do not
/// belong together.
class OracleMismatch : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace sdstab
