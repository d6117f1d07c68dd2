#pragma once

#include <stdexcept>
#include <string>

namespace fmvp {

/// A violated precondition or invariant. The CLI maps this to exit status 1.
class ContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor extents for an operation.
class ShapeError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// A NaN or Inf showed up where the contract requires finite values.
class NumericError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// Unreadable files, bad magic bytes, truncated payloads. CLI exit status 2.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fmvp
