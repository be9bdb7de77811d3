#include "cubeflow/core/error.hpp"

namespace cubeflow {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::OutOfDomain: return "OutOfDomain";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonProductReference: return "NonProductReference";
    case ErrorKind::DegenerateDensity: return "DegenerateDensity";
    case ErrorKind::RootBracketFailure: return "RootBracketFailure";
    case ErrorKind::TrajectoryEscaped: return "TrajectoryEscaped";
    case ErrorKind::InfeasibleSparsity: return "InfeasibleSparsity";
    case ErrorKind::NonFiniteObjective: return "NonFiniteObjective";
    case ErrorKind::DivergedTraining: return "DivergedTraining";
    case ErrorKind::SingularVandermonde: return "SingularVandermonde";
    case ErrorKind::KnotProbe: return "KnotProbe";
    case ErrorKind::UnsupportedOrder: return "UnsupportedOrder";
    case ErrorKind::NegativeDensity: return "NegativeDensity";
    case ErrorKind::HypothesisViolated: return "HypothesisViolated";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

}  // namespace cubeflow
