#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace aurora {

enum class ErrorCode {
  NonFinite,
  TooFewReplicates,
  Empty,
  RaggedRows,
  IndexOutOfRange,
  ArityTooLarge,
  SubsetExplosion,
  DimensionMismatch,
  KMaxTooLarge,
  KOutOfRange,
  NonPositiveData,
  KTooSmall,
  InvalidArgument,
  InvalidConfig,
  LengthMismatch,
  ParseError,
  UnknownMethod,
  RegressorFailure,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::TooFewReplicates: return "TooFewReplicates";
    case ErrorCode::Empty: return "Empty";
    case ErrorCode::RaggedRows: return "RaggedRows";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::ArityTooLarge: return "ArityTooLarge";
    case ErrorCode::SubsetExplosion: return "SubsetExplosion";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::KMaxTooLarge: return "KMaxTooLarge";
    case ErrorCode::KOutOfRange: return "KOutOfRange";
    case ErrorCode::NonPositiveData: return "NonPositiveData";
    case ErrorCode::KTooSmall: return "KTooSmall";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnknownMethod: return "UnknownMethod";
    case ErrorCode::RegressorFailure: return "RegressorFailure";
  }
  return "Unknown";
}

/// Every failure raised by the library. The code is stable; the message is
/// for humans and may gain context as the error propagates.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Re-raise `e` with extra context prepended to its message, keeping the code.
[[noreturn]] inline void rethrow_with_context(const Error& e, const std::string& context) {
  std::string msg = e.what();
  auto colon = msg.find(": ");
  if (colon != std::string::npos) msg = msg.substr(colon + 2);
  throw Error(e.code(), context + ": " + msg);
}

}  // namespace aurora
