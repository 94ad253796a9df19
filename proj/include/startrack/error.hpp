#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace startrack {

enum class ErrorCode {
  kInvalidIntrinsics,
  kInvalidAxis,
  kInvalidArgument,
  kParse,
  kDuplicateId,
  kOutOfRange,
  kIo,
  kDegenerate,
  kIdentificationFailed,
  kRegistrationFailed,
  kUnanchoredSegment,
  kAnchorFree,
  kUnchainedSegment,
  kNumericalFailure,
  kIndexMismatch,
  kInvalidConfig,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace startrack
