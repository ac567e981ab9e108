// Exception taxonomy used across the library.
#pragma once

#include <stdexcept>
#include <string>

namespace plhmm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition or argument violation (bad offsets, size mismatches, non-finite inputs).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Malformed input files: parse failures, schema violations, models that fail validation on load.
class DataError : public Error {
 public:
  using Error::Error;
};

// A reestimate cannot be formed (state with zero posterior mass, rank deficiency).
class EstimationError : public Error {
 public:
  using Error::Error;
};

// An iterative numeric procedure failed to converge; carries the last iterate.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, double last) : Error(what), last_iterate(last) {}
  double last_iterate;
};

// No state/duration tiling of the series has positive probability under the model.
class InfeasibleSeriesError : public Error {
 public:
  using Error::Error;
};

}  // namespace plhmm
