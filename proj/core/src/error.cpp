#include "causeptr/error.hpp"

namespace causeptr {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kFormatError: return "FormatError";
    case ErrorCode::kEmptyText: return "EmptyText";
    case ErrorCode::kMalformedRow: return "MalformedRow";
    case ErrorCode::kAlignmentFailure: return "AlignmentFailure";
    case ErrorCode::kOverlapViolation: return "OverlapViolation";
    case ErrorCode::kTooFewExamples: return "TooFewExamples";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kMissingSegment: return "MissingSegment";
    case ErrorCode::kWidthMismatch: return "WidthMismatch";
    case ErrorCode::kRowCountMismatch: return "RowCountMismatch";
    case ErrorCode::kInvalidSpan: return "InvalidSpan";
    case ErrorCode::kTargetOutOfRange: return "TargetOutOfRange";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kNoValidSpan: return "NoValidSpan";
    case ErrorCode::kUnknownId: return "UnknownId";
    case ErrorCode::kDegenerateVariance: return "DegenerateVariance";
  }
  return "Unknown";
}

ErrorClass error_class(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
      return ErrorClass::kUsage;
    case ErrorCode::kNonFiniteLoss:
    case ErrorCode::kDegenerateVariance:
    case ErrorCode::kNoValidSpan:
      return ErrorClass::kNumeric;
    default:
      return ErrorClass::kData;
  }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
      code_(code) {}

}  // namespace causeptr
