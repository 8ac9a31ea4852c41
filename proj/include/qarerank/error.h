#pragma once

#include <stdexcept>
#include <string>

namespace qarerank {

// Base class for every error the toolkit raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text (JSON, CSV, config syntax).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Well-formed input that violates a data-model invariant.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// A caller-supplied argument is outside its documented domain.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace qarerank
