#pragma once

#include <stdexcept>
#include <string>

namespace delayh2 {

enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  Unstable,
  SingularLyapunov,
  NotDelayFreeStable,
  Infeasible,
  NumericalFailure,
  CgNonConvergence,
  StepInfeasible,
  NoStabilizingPair,
  LostStability,
  MaxIterations,
  NoStableInterval,
  MiqpInfeasible,
  CapExceeded,
  ConfigError,
};

const char* error_name(ErrorCode code);

// Process exit status used by the command line front end.
int exit_code(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace delayh2
