#pragma once

#include <stdexcept>
#include <string>

namespace matchmarket {

enum class ErrorCode {
  NonPositiveRate,
  ProbabilityOutOfRange,
  HorizonNonPositive,
  TimeOutOfRange,
  GridTooSmall,
  SolverDiverged,
  PolicyMismatch,
  GridMismatch,
  NotConvergedWithinBudget,
  InvalidArgument,
};

const char* to_string(ErrorCode code) noexcept;

/// Every failure raised by the engine carries one of the ErrorCode values so
/// the C API can map it to a status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace matchmarket
