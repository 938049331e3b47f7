#pragma once

#include <stdexcept>
#include <string>

namespace posediff {

enum class ErrorKind {
  InvalidInput,
  DegenerateRotation,
  Config,
  Index,
  Shape,
  Ingestion,
  Diverged,
  Checkpoint,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

// Process exit codes shared by every CLI command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitDiverged = 4;

int exit_code_for(ErrorKind kind);

}  // namespace posediff
