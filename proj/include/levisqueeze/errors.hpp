#pragma once

#include <stdexcept>
#include <string>

namespace levisqueeze {

enum class ErrorCode {
  SingularMatrix,
  NotHurwitz,
  NoStabilizingSolution,
  SpectralRadiusGEOne,
  InvalidEfficiency,
  InvalidParameters,
  Overdamped,
  SingularDeltaInversion,
  StepTooLarge,
  NonConverged,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::SingularMatrix: return "SingularMatrix";
    case ErrorCode::NotHurwitz: return "NotHurwitz";
    case ErrorCode::NoStabilizingSolution: return "NoStabilizingSolution";
    case ErrorCode::SpectralRadiusGEOne: return "SpectralRadiusGEOne";
    case ErrorCode::InvalidEfficiency: return "InvalidEfficiency";
    case ErrorCode::InvalidParameters: return "InvalidParameters";
    case ErrorCode::Overdamped: return "Overdamped";
    case ErrorCode::SingularDeltaInversion: return "SingularDeltaInversion";
    case ErrorCode::StepTooLarge: return "StepTooLarge";
    case ErrorCode::NonConverged: return "NonConverged";
  }
  return "Unknown";
}

/// Every failure raised by the numerical core carries one of the codes above.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace levisqueeze
