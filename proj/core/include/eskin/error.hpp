#pragma once

#include <stdexcept>
#include <string>

namespace eskin {

// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfig = 2,
  kMissingInput = 3,
  kNumerical = 4,
};

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, ExitCode code = ExitCode::kFailure)
      : std::runtime_error(what), code_(code) {}

  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

// Violated precondition on a caller-supplied argument.
class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error(what, ExitCode::kConfig) {}
};

// Malformed or unknown configuration.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, ExitCode::kConfig) {}
};

// A required file is absent or unreadable.
class MissingInput : public Error {
 public:
  explicit MissingInput(const std::string& what) : Error(what, ExitCode::kMissingInput) {}
};

// Solver breakdown, divergence, non-finite values.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(what, ExitCode::kNumerical) {}
};

// Inputs that were computed for different meshes, grids or protocols.
class ProvenanceMismatch : public Error {
 public:
  explicit ProvenanceMismatch(const std::string& what) : Error(what, ExitCode::kConfig) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what, ExitCode::kMissingInput) {}
};

}  // namespace eskin
