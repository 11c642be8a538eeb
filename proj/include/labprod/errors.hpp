#pragma once

#include <stdexcept>
#include <string>

namespace labprod {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation (e.g. c <= 0).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Non-finite intermediate in a numerical evaluation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Root finder could not bracket or converge.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// Operation called with its precondition unmet.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A requested chain state cannot be realized on the grid.
class FeasibilityError : public Error {
 public:
  using Error::Error;
};

/// Too few usable points for a regression or fit.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unusable input data (files, curves).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Data that cannot support the requested estimate (too few bins, too
/// narrow a range).
class IllPosedError : public DataError {
 public:
  using DataError::DataError;
};

/// An internal invariant (conservation, capacity) was violated.
class InvariantError : public Error {
 public:
  using Error::Error;
};

}  // namespace labprod
