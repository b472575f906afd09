// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace histoniche {

enum class ErrorCode {
  kInvalidArgument = 1,
  kIo,
  kParse,
  kNumeric,
  kState,
  kShapeMismatch,
};

// Single exception type for the library; the C API maps `code()` onto its
// status enum.
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

// Warnings go through a replaceable sink (stderr by default).
using WarningSink = void (*)(const std::string& message);
void set_warning_sink(WarningSink sink);
void warn(const std::string& message);

}  // namespace histoniche
