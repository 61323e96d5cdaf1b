#pragma once

#include <stdexcept>
#include <string>

namespace stib {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Incompatible matrix dimensions for an operation.
struct ShapeError : Error {
  using Error::Error;
};

// Input outside an operation's mathematical domain (log of non-positive
// entries, digamma at x <= 0, ...).
struct DomainError : Error {
  using Error::Error;
};

// Cholesky pivot <= 0 after jitter.
struct NotPositiveDefiniteError : Error {
  using Error::Error;
};

// Malformed file contents (CSV cells, JSON configs, parameter files).
struct ParseError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

// Training produced a non-finite loss; message carries epoch/batch.
struct DivergenceError : Error {
  using Error::Error;
};

}  // namespace stib
