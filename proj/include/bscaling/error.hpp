#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bscaling {

enum class ErrorKind {
  Usage,
  Parse,
  DegenerateMeasurement,
  InsufficientData,
  DimensionMismatch,
  NonFinite,
  ZeroVariance,
  DomainError,
  SingularMatrix,
  MemoryBudget,
  NegativeVariance,
};

std::string_view to_string(ErrorKind kind);

/// CLI exit code for an error kind: 1 usage, 2 data, 3 numerical.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace bscaling
