#pragma once

#include <stdexcept>
#include <string>

namespace silo {

// Base class for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Length or shape mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Position or residue index outside the valid range.
class BoundsError : public Error {
 public:
  using Error::Error;
};

// A trajectory does not belong to (or cannot be replayed from) a start sequence.
class ProvenanceError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values; the CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Operation invoked on an object in the wrong state (empty dataset, ...).
class StateError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

// Table oracle queried with a sequence it does not list.
class CoverageError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or gradient during optimization.
class TrainingError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace silo
