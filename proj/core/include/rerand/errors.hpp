#pragma once

#include <stdexcept>
#include <string>

namespace rerand {

// Stable error codes; the CLI reuses them as process exit codes.
enum class ErrorCode : int {
  usage = 2,
  io_error = 3,
  invalid_argument = 4,
  degenerate_population = 5,
  singular_covariance = 6,
  missing_outcomes = 7,
  acceptance_starvation = 8,
  pilot_singular = 9,
  calibration_failure = 10,
  shape_mismatch = 11,
  degenerate_prior = 12,
  tuning_failure = 13,
  not_positive_definite = 14,
  undefined_quantity = 15,
  split_error = 16,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Carries the reciprocal condition estimate of the offending matrix.
class SingularCovarianceError : public Error {
 public:
  SingularCovarianceError(const std::string& message, double rcond)
      : Error(ErrorCode::singular_covariance, message), rcond_(rcond) {}

  double rcond() const noexcept { return rcond_; }

 private:
  double rcond_;
};

}  // namespace rerand
