#pragma once

#include <stdexcept>
#include <string>

namespace enacull {

enum class ErrorCode {
  kSchema,
  kValidation,
  kConflict,
  kConfig,
  kGeometry,
  kCoverage,
  kMissingData,
  kTrainingData,
  kContract,
  kInputMissing,
  kIo,
};

const char* to_string(ErrorCode code);

/// Exception carrying a category so the CLI can map failures onto exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) {
    throw Error(code, message);
  }
}

}  // namespace enacull
