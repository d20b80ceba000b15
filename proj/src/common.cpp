#include "cbmshift/common.hpp"

#include <cstdlib>
#include <iostream>

namespace cbmshift {

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("CBMSHIFT_LOG");
    if (env == nullptr) return LogLevel::info;
    const std::string value(env);
    if (value == "quiet") return LogLevel::quiet;
    if (value == "debug") return LogLevel::debug;
    return LogLevel::info;
  }();
  return level;
}

void log_info(const std::string& message) {
  if (log_level() >= LogLevel::info) std::cerr << "[cbmshift] " << message << "\n";
}

void log_debug(const std::string& message) {
  if (log_level() >= LogLevel::debug) std::cerr << "[cbmshift:debug] " << message << "\n";
}

}  // namespace cbmshift
