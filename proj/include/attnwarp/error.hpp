#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace attnwarp {

/// Error variants surfaced by every module. The CLI and the bindings report
/// them by name, so the names are part of the external interface.
enum class ErrorKind {
  InvalidSample,
  ProjectionSingularity,
  Config,
  DimensionMismatch,
  NonFinite,
  OutOfRange,
  BadMagic,
  Truncated,
  UnsupportedDtype,
  Size,
  Io,
  Plugin,
};

constexpr std::string_view kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidSample: return "InvalidSample";
    case ErrorKind::ProjectionSingularity: return "ProjectionSingularity";
    case ErrorKind::Config: return "Config";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::Truncated: return "Truncated";
    case ErrorKind::UnsupportedDtype: return "UnsupportedDtype";
    case ErrorKind::Size: return "Size";
    case ErrorKind::Io: return "Io";
    case ErrorKind::Plugin: return "Plugin";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::string_view name() const noexcept { return kind_name(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool cond, ErrorKind kind, const std::string& message) {
  if (!cond) fail(kind, message);
}

}  // namespace attnwarp
