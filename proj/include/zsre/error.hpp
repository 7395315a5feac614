#pragma once

#include <stdexcept>
#include <string>

namespace zsre {

enum class ErrorCode {
  InvalidArgument = 1,
  Io = 2,
  Parse = 3,
  Validation = 4,
  Numeric = 5,
  Version = 6,
};

// All failures in the core surface as this exception; the C API maps the code
// onto zsre_status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace zsre
