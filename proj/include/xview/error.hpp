#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace xview {

// Categories map onto CLI exit codes (2..5).
enum class ErrorKind {
  BadArgument = 2,
  DataValidation = 3,
  Numerical = 4,
  Io = 5,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

// Non-fatal diagnostics. The default sink writes "warning: ..." to stderr;
// tests install their own sink to capture messages.
using WarningSink = std::function<void(std::string_view)>;

WarningSink set_warning_sink(WarningSink sink);
void warn(std::string_view message);

}  // namespace xview
