#pragma once

#include <stdexcept>
#include <string>

namespace vinet {

/// Violated precondition or argument contract. CLI exit code 2.
class ContractError : public std::invalid_argument {
 public:
  explicit ContractError(const std::string& what) : std::invalid_argument(what) {}
};

class DimensionMismatch : public ContractError {
 public:
  explicit DimensionMismatch(const std::string& what) : ContractError(what) {}
};

/// Filesystem or codec failure. CLI exit code 3.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

class DecodeError : public IoError {
 public:
  explicit DecodeError(const std::string& what) : IoError(what) {}
};

class FormatError : public IoError {
 public:
  explicit FormatError(const std::string& what) : IoError(what) {}
};

/// Raised when training produces a non-finite loss.
class TrainingDiverged : public std::runtime_error {
 public:
  explicit TrainingDiverged(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}

}  // namespace vinet
