#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace attnamer {

enum class ErrorCode {
  ZeroVector,
  NonFinite,
  DimensionMismatch,
  UnknownIdentity,
  EmptyStore,
  ShapeMismatch,
  IndexOutOfRange,
  ParseError,
  LengthMismatch,
  EmptyInput,
  EmptyClass,
  OverlappingIds,
  InvalidSpec,
  Io,
};

std::string_view to_string(ErrorCode code);

// All library failures are reported through this one exception type; callers
// branch on code() rather than on a class hierarchy.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::size_t> line = std::nullopt)
      : std::runtime_error(format(code, message, line)), code_(code), line_(line) {}

  ErrorCode code() const noexcept { return code_; }

  // 1-based line number for ParseError raised by the JSONL readers.
  std::optional<std::size_t> line() const noexcept { return line_; }

 private:
  static std::string format(ErrorCode code, const std::string& message,
                            std::optional<std::size_t> line) {
    std::string out{to_string(code)};
    if (line) out += " (line " + std::to_string(*line) + ")";
    out += ": ";
    out += message;
    return out;
  }

  ErrorCode code_;
  std::optional<std::size_t> line_;
};

}  // namespace attnamer
