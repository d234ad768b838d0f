#pragma once

#include <stdexcept>
#include <string>

namespace fibm {

// Error taxonomy shared by the C++ core and the C API layer.
enum class ErrorCode {
  InvalidArgument,
  Io,
  Json,
  DimensionMismatch,
  NonHermitian,
  BoundaryCollision,
  NagyGap,
  ThresholdInInterval,
  NoConvergence,
  CoverageGap,
  AbsorptionViolation,
  IncompleteFamily,
  NonCommuting,
  PartitionGap,
  FlatDirection,
  NonCommutingPrincipal,
  SupportTouchesBoundary,
  MissingStage,
  CostGuard,
  Verification,
  Internal,
};

const char* error_code_name(ErrorCode c);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) {
  throw Error(code, msg);
}

}  // namespace fibm
