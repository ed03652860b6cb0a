#pragma once

#include <stdexcept>
#include <string>

namespace gam {

// Exit codes used by the command-line front end. Library code throws; only
// tools/ maps exceptions to process status.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 2,
  kPrecondition = 3,
  kNumerical = 4,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept { return ExitCode::kPrecondition; }
};

/// Bad or out-of-range configuration, malformed input files.
class ConfigError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kConfig; }
};

/// A contract precondition was violated (missing artifact, invalid index...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Shapes that do not line up.
class DimensionError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

/// NaN/Inf gradients, diverging losses, non-stochastic matrices.
class NumericalError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kNumerical; }
};

}  // namespace gam
