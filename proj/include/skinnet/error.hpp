#pragma once

#include <stdexcept>
#include <string>

namespace skinnet {

/// Broad failure categories. The CLI maps each one onto a stable exit code.
enum class ErrorKind {
  kConfig,   // bad flags or hyperparameters
  kData,     // dataset layout, undecodable image
  kNumeric,  // NaN/Inf in an activation or the loss
  kArchive,  // weight archive unreadable, corrupt or mismatched
  kShape,    // tensor shape contract violated
  kIo,       // output could not be written
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace skinnet
