#include "flaegis/log.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace flaegis {

LogLevel log_level()
{
  static const LogLevel level = [] {
    const char* env = std::getenv("FLAEGIS_LOG");
    const std::string v = env ? env : "";
    if (v == "debug")
      return LogLevel::debug;
    if (v == "info")
      return LogLevel::info;
    return LogLevel::error;
  }();
  return level;
}

void log(LogLevel level, std::string_view message)
{
  if (static_cast<int>(level) > static_cast<int>(log_level()))
    return;
  static std::mutex mu;
  static constexpr const char* names[] = { "error", "info", "debug" };
  std::lock_guard lock(mu);
  std::cerr << "[flaegis " << names[static_cast<int>(level)] << "] " << message << '\n';
}

} // namespace flaegis
