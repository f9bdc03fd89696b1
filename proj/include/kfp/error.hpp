#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kfp {

enum class ErrorCode {
  RankDeficient,
  MonotonicityViolated,
  ShapeMismatch,
  NonpositiveLambda,
  BoxTooSmall,
  NotAfterPole,
  SingularCovariance,
  EllipticityViolated,
  QuadratureNotConverged,
  SupportNotCompact,
  HolderSeminormUnbounded,
  UnsupportedCoefficients,
  GridIncompatible,
  ZeroData,
  EmptyBank,
  EmptyLadder,
  RadiusExceedsBox,
  KTooSmall,
  ConfigParse,
  SpecInvalid,
  IOFailure,
  ExpressionParse,
  InvalidArgument,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::MonotonicityViolated: return "MonotonicityViolated";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonpositiveLambda: return "NonpositiveLambda";
    case ErrorCode::BoxTooSmall: return "BoxTooSmall";
    case ErrorCode::NotAfterPole: return "NotAfterPole";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::EllipticityViolated: return "EllipticityViolated";
    case ErrorCode::QuadratureNotConverged: return "QuadratureNotConverged";
    case ErrorCode::SupportNotCompact: return "SupportNotCompact";
    case ErrorCode::HolderSeminormUnbounded: return "HolderSeminormUnbounded";
    case ErrorCode::UnsupportedCoefficients: return "UnsupportedCoefficients";
    case ErrorCode::GridIncompatible: return "GridIncompatible";
    case ErrorCode::ZeroData: return "ZeroData";
    case ErrorCode::EmptyBank: return "EmptyBank";
    case ErrorCode::EmptyLadder: return "EmptyLadder";
    case ErrorCode::RadiusExceedsBox: return "RadiusExceedsBox";
    case ErrorCode::KTooSmall: return "KTooSmall";
    case ErrorCode::ConfigParse: return "ConfigParse";
    case ErrorCode::SpecInvalid: return "SpecInvalid";
    case ErrorCode::IOFailure: return "IOFailure";
    case ErrorCode::ExpressionParse: return "ExpressionParse";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure in the library is reported through this exception; `code()`
/// identifies the failure class so callers (and the CLI exit status) can branch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) throw Error(code, what);
}

}  // namespace kfp
