#pragma once

// Process-wide sink for non-fatal warnings (e.g. a value law that is not
// MHR, an epsilon that had to be clamped). The default prints to stderr;
// front ends replace it to silence or capture warnings. Install the handler
// before starting worker threads.

#include <functional>
#include <iostream>
#include <string>

namespace calibra {

using WarningHandler = std::function<void(const std::string&)>;

namespace detail {
inline WarningHandler& warning_slot() {
  static WarningHandler handler = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  return handler;
}
}  // namespace detail

inline void set_warning_handler(WarningHandler handler) {
  detail::warning_slot() = handler ? std::move(handler) : [](const std::string&) {};
}

inline void warn(const std::string& msg) { detail::warning_slot()(msg); }

}  // namespace calibra
