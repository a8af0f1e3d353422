#pragma once

#include <stdexcept>
#include <string>

namespace stancegen {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes or dimensions disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A precondition on an argument is violated (empty list, all-masked, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// A function was evaluated outside its domain (log of a non-positive value).
class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Problems with input data: unparseable rows, missing targets, bad ids.
class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  using DataError::DataError;
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

// The requested operation is not supported by this model variant.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

}  // namespace stancegen
