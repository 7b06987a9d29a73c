#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace causeptr {

enum class ErrorCode {
  kInvalidArgument,
  kIoError,
  kFormatError,
  // corpus
  kEmptyText,
  kMalformedRow,
  kAlignmentFailure,
  kOverlapViolation,
  kTooFewExamples,
  // encoder / decoder
  kDimensionMismatch,
  kMissingSegment,
  kWidthMismatch,
  kRowCountMismatch,
  kInvalidSpan,
  // training / inference
  kTargetOutOfRange,
  kNonFiniteLoss,
  kNoValidSpan,
  // evaluation
  kUnknownId,
  kDegenerateVariance,
};

std::string_view error_code_name(ErrorCode code);

/// Broad classes used to map failures onto process exit codes.
enum class ErrorClass { kUsage, kData, kNumeric };

ErrorClass error_class(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace causeptr
