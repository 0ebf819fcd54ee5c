#pragma once

#include <stdexcept>
#include <string>

namespace stylecore {

enum class ErrorKind {
  InvalidArgument,
  ShapeMismatch,
  DivisionByZero,
  ZeroVector,
  Infeasible,
  SizeLimit,
  Singular,
  Io,
  Format,
  Cancelled,
};

const char* to_string(ErrorKind kind);

// All library failures are reported through this type; `kind()` lets callers
// branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void raise(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const char* message) {
  if (!condition) raise(kind, message);
}

}  // namespace stylecore
