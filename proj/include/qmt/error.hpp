#pragma once

#include <stdexcept>
#include <string>

namespace qmt {

// Error categories map onto CLI exit codes: usage=2, io=3, numeric=4.
enum class ErrorCode {
  bad_magic,
  truncated_payload,
  shape_mismatch,
  bad_header,
  bad_kind,
  io_failure,
  invalid_argument,
  numeric_failure,
};

class QmtError : public std::runtime_error {
 public:
  QmtError(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw QmtError(code, message);
}

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::bad_magic: return "bad magic";
    case ErrorCode::truncated_payload: return "truncated payload";
    case ErrorCode::shape_mismatch: return "shape mismatch";
    case ErrorCode::bad_header: return "bad header";
    case ErrorCode::bad_kind: return "bad kind";
    case ErrorCode::io_failure: return "io failure";
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::numeric_failure: return "numeric failure";
  }
  return "unknown";
}

}  // namespace qmt
