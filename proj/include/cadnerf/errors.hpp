#pragma once

#include <stdexcept>
#include <string>

namespace cadnerf {

/// Failure category. Each maps onto one CLI exit code.
enum class ErrorKind {
  InvalidInput,
  Format,
  SurfaceAmbiguous,
  EmptySilhouette,
  Dimension,
  CorruptLibrary,
  Infeasible,
  TooManyDiscards,
  AlignmentIllConditioned,
  ImageTooSmall,
  DoubleBackward,
  Optimizer,
  Divergence,
  Io,
};

const char* to_string(ErrorKind kind);

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

}  // namespace cadnerf
