#include "fiberspec/error.hpp"

namespace fiberspec {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::ZeroDenominator: return "ZeroDenominator";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::EmptyOutput: return "EmptyOutput";
    case ErrorCode::InvalidWindow: return "InvalidWindow";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::StageOrder: return "StageOrder";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::SpecInvalid: return "SpecInvalid";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::EmptyObject: return "EmptyObject";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::UnknownObject: return "UnknownObject";
    case ErrorCode::HeaderMismatch: return "HeaderMismatch";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::BadUtf8: return "BadUtf8";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace fiberspec
