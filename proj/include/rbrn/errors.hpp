#pragma once

#include <stdexcept>
#include <string>

namespace rbrn {

// Base class for every error thrown by this library.  Catch sites that only
// care about "did rbrn fail" can catch this; the CLI maps subclasses onto
// exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- configuration / usage ---

// A request exceeds the supported desk-scale budget (e.g. grid sizes).
class BudgetExceeded : public Error {
 public:
  using Error::Error;
};

// Invalid command-line usage (unknown problem tag, missing flag, ...).
class UsageError : public Error {
 public:
  using Error::Error;
};

// A training or sweep configuration value is out of range.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// --- data and shape ---

// Array dimensions do not match what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Requested basis rank is outside the valid range for the data.
class RankError : public Error {
 public:
  using Error::Error;
};

// An operation that needs at least one sample received none.
class EmptySample : public Error {
 public:
  using Error::Error;
};

// A dataset lacks the Jacobians an operation requires.
class MissingJacobians : public Error {
 public:
  using Error::Error;
};

// A bound needs a Lipschitz constant that was not supplied.
class MissingLipschitz : public Error {
 public:
  using Error::Error;
};

// A scalar argument lies outside its mathematical domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

// All test samples were degenerate (zero-norm reference outputs).
class DegenerateSample : public Error {
 public:
  using Error::Error;
};

// --- linear algebra ---

// A covariance failed validation (asymmetric or not positive definite).
class InvalidCovariance : public Error {
 public:
  using Error::Error;
};

// A matrix required to be symmetric is not.
class NotSymmetric : public Error {
 public:
  using Error::Error;
};

// A matrix required to be symmetric positive definite is not.
class NotSPD : public Error {
 public:
  using Error::Error;
};

// A linear solve or factorization failed numerically.
class SolveFailure : public Error {
 public:
  using Error::Error;
};

// Training encountered a non-finite loss or intermediate value.
class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};

// --- persistence ---

// The file does not start with the archive magic.
class NotAnArchive : public Error {
 public:
  using Error::Error;
};

// The archive is structurally damaged (truncated or inconsistent).
class CorruptArchive : public Error {
 public:
  using Error::Error;
};

// The archive version is newer than this library understands.
class UnsupportedVersion : public Error {
 public:
  using Error::Error;
};

// Text input (CSV, JSON) could not be parsed.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace rbrn
