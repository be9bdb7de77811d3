#pragma once

#include <stdexcept>
#include <string>

namespace cubeflow {

/// Failure categories surfaced by the library. The CLI maps them onto exit codes.
enum class ErrorKind {
  NonFiniteValue,
  OutOfDomain,
  DimensionMismatch,
  NonProductReference,
  DegenerateDensity,
  RootBracketFailure,
  TrajectoryEscaped,
  InfeasibleSparsity,
  NonFiniteObjective,
  DivergedTraining,
  SingularVandermonde,
  KnotProbe,
  UnsupportedOrder,
  NegativeDensity,
  HypothesisViolated,
  InvalidArgument,
  ConfigError,
  IoError,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace cubeflow
