#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sensa {

enum class ErrorKind {
  Structural,        // dimension / shape mismatch
  Domain,            // value outside its admissible domain
  Degenerate,        // all-zero or constant input where variation is required
  NoData,            // nothing valid left to estimate from
  Config,            // invalid configuration
  Singular,          // rank-deficient linear system
  InsufficientData,  // fewer rows than the estimator needs
  Convergence,       // optimizer ran out of iterations
  UnsupportedDesign, // operation not defined for this design kind
  Setup,             // external executable missing etc.
  BatchQuality,      // too many failed simulator rows
  StalePipeline,     // stage inputs do not match the current config
  Io,
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

}  // namespace sensa
