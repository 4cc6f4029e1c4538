#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cavi {

enum class ErrorCode {
  NotSymmetric,
  NotPositiveDefinite,
  IndexOutOfRange,
  DuplicatePair,
  DimensionMismatch,
  NonPositiveSigma,
  NonFiniteInput,
  NonFiniteLogDensity,
  BoundaryMass,
  UOutOfRange,
  InvalidGrid,
  NotNormalized,
  GridOverflow,
  NonFiniteIntegrand,
  InvalidSchedule,
  FileNotFound,
  ParseError,
  MissingConstants,
  BackendMismatch,
  MissingLogPartition,
  MissingEnvelope,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a machine-readable code so the
// CLI can map it to an exit status and tests can assert on the kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::DuplicatePair: return "DuplicatePair";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonPositiveSigma: return "NonPositiveSigma";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::NonFiniteLogDensity: return "NonFiniteLogDensity";
    case ErrorCode::BoundaryMass: return "BoundaryMass";
    case ErrorCode::UOutOfRange: return "UOutOfRange";
    case ErrorCode::InvalidGrid: return "InvalidGrid";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::GridOverflow: return "GridOverflow";
    case ErrorCode::NonFiniteIntegrand: return "NonFiniteIntegrand";
    case ErrorCode::InvalidSchedule: return "InvalidSchedule";
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::MissingConstants: return "MissingConstants";
    case ErrorCode::BackendMismatch: return "BackendMismatch";
    case ErrorCode::MissingLogPartition: return "MissingLogPartition";
    case ErrorCode::MissingEnvelope: return "MissingEnvelope";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace cavi
