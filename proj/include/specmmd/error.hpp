#pragma once

#include <stdexcept>
#include <string>

namespace specmmd {

/// Error taxonomy used by the CLI to map failures onto exit codes:
/// usage/config problems vs. data or numerical failures.
enum class ErrorKind {
  InvalidArgument,  // bad parameter, violated precondition
  Dimension,        // incompatible matrix shapes
  Parse,            // malformed config / spec strings / CSV content
  Numerical,        // eigendecomposition or conditioning failure
  Io,               // unreadable or missing file
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace specmmd
