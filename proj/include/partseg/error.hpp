#pragma once

#include <stdexcept>
#include <string>

namespace partseg {

// Errors fall in two families: validation (bad arguments or input content)
// and I/O (filesystem, store integrity). The CLI maps them to exit codes 1
// and 2 respectively.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class RangeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class MalformedInputError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DegenerateStatisticsError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ContractViolation : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class CapacityError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class IntegrityError : public IoError {
 public:
  using IoError::IoError;
};

class ParseError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace partseg
