#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace saae {

// Machine-greppable failure categories. The CLI prints them as
// "error[<code>]: <message>" on a single line.
enum class ErrorCode {
  InvalidArgument,
  ShapeMismatch,
  DataValidation,
  MissingData,
  UnknownLabel,
  Io,
  Format,
  NonFinite,
  Usage,
};

inline std::string_view to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidArgument: return "E_INVALID_ARGUMENT";
    case ErrorCode::ShapeMismatch: return "E_SHAPE_MISMATCH";
    case ErrorCode::DataValidation: return "E_DATA_VALIDATION";
    case ErrorCode::MissingData: return "E_MISSING_DATA";
    case ErrorCode::UnknownLabel: return "E_UNKNOWN_LABEL";
    case ErrorCode::Io: return "E_IO";
    case ErrorCode::Format: return "E_FORMAT";
    case ErrorCode::NonFinite: return "E_NON_FINITE";
    case ErrorCode::Usage: return "E_USAGE";
  }
  return "E_UNKNOWN";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace saae
