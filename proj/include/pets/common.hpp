#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace pets {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller-supplied value is outside the accepted domain.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A configuration object fails validation.
class InvalidConfig : public Error {
 public:
  using Error::Error;
};

/// Tensor or array shapes are incompatible for the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A text input (CSV, JSON) could not be parsed.  Messages carry the
/// 1-based row and column of the offending cell where applicable.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// An object is used in a state it does not support (e.g. backward
/// before forward, stepping an optimizer with no registered params).
class StateError : public Error {
 public:
  using Error::Error;
};

/// A spectrogram carries no energy, so thresholds are undefined.
class DegenerateSpectrum : public Error {
 public:
  using Error::Error;
};

/// Training or evaluation hit a non-finite value it cannot recover
/// from (e.g. NaN loss).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A metric denominator is exactly zero for every term.
class DegenerateDenominator : public Error {
 public:
  using Error::Error;
};

/// Deterministic 64-bit generator used everywhere randomness is needed.
/// A single seed fixes initialization, shuffling and dropout, so two
/// runs with the same seed produce identical results.
using Rng = std::mt19937_64;

/// Formats a shape as "[2, 3, 4]" for error messages.
std::string shape_str(const std::vector<std::int64_t>& shape);

/// Product of the dimensions; the element count of a shape.
std::int64_t shape_numel(const std::vector<std::int64_t>& shape);

/// Throws ShapeError with both shapes in the message unless they match.
void check_same_shape(const std::vector<std::int64_t>& a,
                      const std::vector<std::int64_t>& b,
                      const std::string& where);

}  // namespace pets
