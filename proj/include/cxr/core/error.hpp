#pragma once

#include <stdexcept>
#include <string>

namespace cxr {

/// Process exit codes shared by every command-line entry point.
enum class ExitCode : int {
  ok = 0,
  discrepancy = 1,
  usage = 2,
  missing_input = 3,
};

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, ExitCode code = ExitCode::discrepancy)
      : std::runtime_error(what), code_(code) {}

  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// A required file or directory does not exist or holds nothing usable.
class MissingInputError : public Error {
 public:
  explicit MissingInputError(const std::string& what) : Error(what, ExitCode::missing_input) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(what, ExitCode::usage) {}
};

/// Malformed or inconsistent data (bad file, missing class, key mismatch).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(what) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& what) : Error(what) {}
};

}  // namespace cxr
