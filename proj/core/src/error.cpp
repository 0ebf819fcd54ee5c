#include "stylecore/error.hpp"

namespace stylecore {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::ShapeMismatch: return "shape mismatch";
    case ErrorKind::DivisionByZero: return "division by zero";
    case ErrorKind::ZeroVector: return "zero vector";
    case ErrorKind::Infeasible: return "infeasible";
    case ErrorKind::SizeLimit: return "size limit exceeded";
    case ErrorKind::Singular: return "singular system";
    case ErrorKind::Io: return "i/o error";
    case ErrorKind::Format: return "format error";
    case ErrorKind::Cancelled: return "cancelled";
  }
  return "unknown";
}

void raise(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace stylecore
