#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fvforge {

/// Classes of failure raised by the library. Each maps to one CLI exit code.
enum class ErrorKind {
  usage,       // bad command line
  parameter,   // argument violates an operation's precondition
  shape,       // dimension mismatch between operands
  format,      // bad magic / version / header field
  corruption,  // header and payload disagree
  data,        // non-finite or out-of-domain values
  validation,  // manifest or config semantic error
  io,          // filesystem failure
  numeric,     // solver failure
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace fvforge
