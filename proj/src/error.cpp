#include "xview/error.hpp"

#include <iostream>
#include <mutex>

namespace xview {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::BadArgument:
      return "bad_argument";
    case ErrorKind::DataValidation:
      return "data_validation";
    case ErrorKind::Numerical:
      return "numerical";
    case ErrorKind::Io:
      return "io";
  }
  return "unknown";
}

namespace {

std::mutex g_sink_mutex;

WarningSink& sink_slot() {
  static WarningSink sink;
  return sink;
}

}  // namespace

WarningSink set_warning_sink(WarningSink sink) {
  std::lock_guard lock(g_sink_mutex);
  WarningSink previous = std::move(sink_slot());
  sink_slot() = std::move(sink);
  return previous;
}

void warn(std::string_view message) {
  std::lock_guard lock(g_sink_mutex);
  if (sink_slot()) {
    sink_slot()(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

}  // namespace xview
