#pragma once

#include <stdexcept>
#include <string>

namespace sg {

enum class ErrorCode {
  InvalidArgument,
  NoValidDepth,
  BadIntrinsics,
  NoValidPixels,
  ShapeMismatch,
  DivergenceDetected,
  NoMasks,
  MissingTargetFeature,
  EmptyQueryResult,
  NoValidNeighborhood,
  DegenerateInput,
  NoNearbySurface,
  DegenerateContacts,
  NoFeasibleGrasp,
  ParseError,
  MissingFile,
  InvariantViolation,
  IoError,
};

const char* to_string(ErrorCode code);

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace sg
