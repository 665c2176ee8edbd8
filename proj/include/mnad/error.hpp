#pragma once

#include <stdexcept>
#include <string>

namespace mnad {

enum class ErrorCode {
  dimension_mismatch,
  singular_matrix,
  eigen_failure,
  parse_error,
  schema_error,
  validation_error,
  invalid_argument,
  not_compensated,   // rho(H) >= 1, no steady state exists
  moment_explosion,  // non-finite empirical or supplied moments
  inconsistent_moments,
};

const char* to_string(ErrorCode code) noexcept;

/// Exception carrying a machine-readable code. Riccati non-convergence is not
/// an error; it is reported through CompensatorGains::converged.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::singular_matrix: return "singular_matrix";
    case ErrorCode::eigen_failure: return "eigen_failure";
    case ErrorCode::parse_error: return "parse_error";
    case ErrorCode::schema_error: return "schema_error";
    case ErrorCode::validation_error: return "validation_error";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::not_compensated: return "not_compensated";
    case ErrorCode::moment_explosion: return "moment_explosion";
    case ErrorCode::inconsistent_moments: return "inconsistent_moments";
  }
  return "unknown";
}

}  // namespace mnad
