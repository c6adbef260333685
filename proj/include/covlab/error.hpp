#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace covlab {

enum class ErrorKind {
  InvalidArgument,
  DimensionMismatch,
  NotSymmetric,
  NonFinite,
  NotPositiveDefinite,
  EigenNotConverged,
  DomainError,
  InvalidDf,
  ImproperPrior,
  TruncationExhausted,
  SingularTruth,
  SingularPosterior,
  MomentUndefined,
  OddK,
  UnsupportedLoss,
  UnsupportedPrior,
  DegenerateFit,
  TooLarge,
  ConstraintViolated,
  ConditionViolated,
  ConfigError,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace covlab
