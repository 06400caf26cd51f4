#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fiberspec {

enum class ErrorCode {
  ShapeMismatch,
  ZeroDenominator,
  ZeroVariance,
  EmptyOutput,
  InvalidWindow,
  TooShort,
  StageOrder,
  NonFinite,
  IndexOutOfRange,
  Diverged,
  SpecInvalid,
  ValidationError,
  TooFewSamples,
  EmptyObject,
  LengthMismatch,
  LabelOutOfRange,
  UnknownObject,
  HeaderMismatch,
  TruncatedPayload,
  BadUtf8,
  ChecksumMismatch,
  InvalidConfig,
  IoError,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

}  // namespace fiberspec
