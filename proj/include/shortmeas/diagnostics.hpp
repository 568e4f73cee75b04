#pragma once

#include <functional>
#include <iostream>
#include <string>
#include <string_view>

namespace shortmeas {

/// Sink for non-fatal physics warnings (regime validity, sampling density).
/// Defaults to std::clog; tests and the CLI install their own collector.
using WarningHandler = std::function<void(std::string_view)>;

inline WarningHandler& warning_handler() {
  static WarningHandler handler = [](std::string_view msg) { std::clog << "warning: " << msg << '\n'; };
  return handler;
}

inline void warn(std::string_view msg) {
  if (auto& h = warning_handler()) h(msg);
}

/// Installs a handler for the lifetime of the guard.
class ScopedWarningHandler {
 public:
  explicit ScopedWarningHandler(WarningHandler h) : saved_(std::move(warning_handler())) {
    warning_handler() = std::move(h);
  }
  ~ScopedWarningHandler() { warning_handler() = std::move(saved_); }
  ScopedWarningHandler(const ScopedWarningHandler&) = delete;
  ScopedWarningHandler& operator=(const ScopedWarningHandler&) = delete;

 private:
  WarningHandler saved_;
};

}  // namespace shortmeas
