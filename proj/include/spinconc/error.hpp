#pragma once

#include <stdexcept>
#include <string>

namespace spinconc {

/// Bad argument: size mismatch, out-of-range index, invalid parameter.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Requested computation exceeds a configured resource limit.
class ResourceLimit : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mathematical domain violation, e.g. conditioning on an empty set.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A stated hypothesis does not hold, so the result would be meaningless.
class PreconditionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// The operation is not defined for this model kind.
class Unsupported : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace spinconc
