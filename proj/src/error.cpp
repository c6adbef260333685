#include "covlab/error.hpp"

namespace covlab {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NotSymmetric: return "NotSymmetric";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::EigenNotConverged: return "EigenNotConverged";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::InvalidDf: return "InvalidDf";
    case ErrorKind::ImproperPrior: return "ImproperPrior";
    case ErrorKind::TruncationExhausted: return "TruncationExhausted";
    case ErrorKind::SingularTruth: return "SingularTruth";
    case ErrorKind::SingularPosterior: return "SingularPosterior";
    case ErrorKind::MomentUndefined: return "MomentUndefined";
    case ErrorKind::OddK: return "OddK";
    case ErrorKind::UnsupportedLoss: return "UnsupportedLoss";
    case ErrorKind::UnsupportedPrior: return "UnsupportedPrior";
    case ErrorKind::DegenerateFit: return "DegenerateFit";
    case ErrorKind::TooLarge: return "TooLarge";
    case ErrorKind::ConstraintViolated: return "ConstraintViolated";
    case ErrorKind::ConditionViolated: return "ConditionViolated";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace covlab
