#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace klap {

enum class ErrorCode {
  NotHurwitz,
  IllConditioned,
  Defective,
  SingularOperator,
  NotPSD,
  SingularShift,
  DimensionMismatch,
  NoSolution,
  SingularFeedthrough,
  AreFailure,
  LineSearchFailure,
  ParseError,
  InvalidArgument,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NotHurwitz: return "NotHurwitz";
    case ErrorCode::IllConditioned: return "IllConditioned";
    case ErrorCode::Defective: return "Defective";
    case ErrorCode::SingularOperator: return "SingularOperator";
    case ErrorCode::NotPSD: return "NotPSD";
    case ErrorCode::SingularShift: return "SingularShift";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NoSolution: return "NoSolution";
    case ErrorCode::SingularFeedthrough: return "SingularFeedthrough";
    case ErrorCode::AreFailure: return "AreFailure";
    case ErrorCode::LineSearchFailure: return "LineSearchFailure";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers can branch on the kind (e.g. fall back to a dense Lyapunov solve
/// on IllConditioned) without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace klap
