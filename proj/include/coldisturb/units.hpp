#pragma once

#include <chrono>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace coldisturb {

/// All simulated time is kept in nanoseconds with double precision.
using Duration = std::chrono::duration<double, std::nano>;

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

inline constexpr Duration infinite_duration() { return Duration{kInfinity}; }

inline bool is_finite(Duration d) { return d.count() < kInfinity; }

constexpr Duration nanoseconds(double v) { return Duration{v}; }
constexpr Duration microseconds(double v) { return Duration{v * 1e3}; }
constexpr Duration milliseconds(double v) { return Duration{v * 1e6}; }
constexpr Duration seconds(double v) { return Duration{v * 1e9}; }

inline double to_ms(Duration d) { return d.count() * 1e-6; }
inline double to_us(Duration d) { return d.count() * 1e-3; }

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid geometry, distribution, or experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the accepted range (row index, lengths, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Command stream violates bank state rules.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Closed-form model evaluated outside its domain.
class ModelDomainError : public Error {
 public:
  using Error::Error;
};

/// Requested evaluation mode is not feasible (e.g. enumeration too large).
class ModeError : public Error {
 public:
  using Error::Error;
};

}  // namespace coldisturb
