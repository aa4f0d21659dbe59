#pragma once

#include <stdexcept>
#include <string>

namespace qlink {

// Invalid argument values: probabilities outside [0,1], bad channel
// parameters, malformed histories.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Operands whose Hilbert-space dimensions do not line up.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A request exceeds a hard size limit of the chosen evaluation mode
// (horizon too long for tree enumeration, materialized state too large).
class LimitError : public std::length_error {
 public:
  using std::length_error::length_error;
};

// A numerical routine failed to produce a trustworthy value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ParameterError(std::string(what) + " must lie in [0,1], got " +
                         std::to_string(p));
  }
}

}  // namespace detail
}  // namespace qlink
