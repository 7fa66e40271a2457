#pragma once

#include <stdexcept>
#include <string>

namespace srotlab {

/// Base of all srotlab exceptions. The CLI maps subclasses to exit codes:
/// config/IO problems -> 2, solver failures -> 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnknownFrameError : Error {
  explicit UnknownFrameError(const std::string& name)
      : Error("unknown frame: " + name) {}
};

struct IndexOutOfRangeError : Error {
  using Error::Error;
};

struct WrongDimensionError : Error {
  using Error::Error;
};

struct NonFiniteError : Error {
  using Error::Error;
};

struct NoConvergenceError : Error {
  using Error::Error;
};

struct CutLocusError : Error {
  using Error::Error;
};

struct MultiDestinationRowError : Error {
  using Error::Error;
};

struct DegenerateNeighborhoodError : Error {
  using Error::Error;
};

struct GridTooCoarseError : Error {
  using Error::Error;
};

struct InfeasibleError : Error {
  using Error::Error;
};

struct NumericalFailureError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

struct SolverError : Error {
  using Error::Error;
};

}  // namespace srotlab
