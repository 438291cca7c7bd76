#pragma once

#include <stdexcept>
#include <string>

namespace miras {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes of operands do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Serialized bytes or config documents that cannot be decoded.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Caller violated an operation's precondition (e.g. state off the simplex).
class ContractError : public Error {
 public:
  using Error::Error;
};

// A numerical procedure failed to converge or produced non-finite values.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace miras
