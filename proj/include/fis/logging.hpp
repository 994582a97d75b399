#pragma once

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace fis {

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

// Verbosity comes from the FIS_LOG environment variable
// (error|warn|info|debug). Defaults to info.
inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("FIS_LOG");
    if (env == nullptr) return LogLevel::kInfo;
    const std::string v(env);
    if (v == "error") return LogLevel::kError;
    if (v == "warn") return LogLevel::kWarn;
    if (v == "debug") return LogLevel::kDebug;
    return LogLevel::kInfo;
  }();
  return level;
}

inline void log(LogLevel level, const std::string& message) {
  if (level > log_level()) return;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  const char* tag = level == LogLevel::kError  ? "error"
                    : level == LogLevel::kWarn ? "warn"
                    : level == LogLevel::kInfo ? "info"
                                               : "debug";
  std::cerr << "[fis:" << tag << "] " << message << "\n";
}

}  // namespace fis
