#ifndef LPRE_ERROR_HPP
#define LPRE_ERROR_HPP

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lpre {

enum class ErrorCode {
  DimensionMismatch,
  NotPositiveDefinite,
  Overflow,
  NotConverged,
  Singular,
  InvalidLevel,
  InvalidConfig,
  ParseError,
  NonPositiveResponse,
  InconsistentWidth,
  IoError,
  VersionMismatch,
  DigestMismatch,
  MethodMismatch,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::Overflow: return "Overflow";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::Singular: return "Singular";
    case ErrorCode::InvalidLevel: return "InvalidLevel";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::NonPositiveResponse: return "NonPositiveResponse";
    case ErrorCode::InconsistentWidth: return "InconsistentWidth";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::DigestMismatch: return "DigestMismatch";
    case ErrorCode::MethodMismatch: return "MethodMismatch";
  }
  return "Unknown";
}

/// Every failure in the library is reported as an Error carrying a code.
/// Data errors additionally carry the 1-based data row (header excluded).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what, std::optional<std::size_t> row = std::nullopt)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), row_(row) {}

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> row() const noexcept { return row_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> row_;
};

}  // namespace lpre

#endif  // LPRE_ERROR_HPP
