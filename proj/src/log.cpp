#include "sensa/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace sensa {

namespace {
std::atomic<LogLevel> g_level{LogLevel::Warn};
std::mutex g_mutex;
}  // namespace

void set_log_level(LogLevel level) { g_level.store(level); }
LogLevel log_level() { return g_level.load(); }

void log_warning(std::string_view message) {
  if (g_level.load() < LogLevel::Warn) return;
  std::lock_guard lock(g_mutex);
  std::clog << "warning: " << message << '\n';
}

void log_info(std::string_view message) {
  if (g_level.load() < LogLevel::Info) return;
  std::lock_guard lock(g_mutex);
  std::clog << "info: " << message << '\n';
}

}  // namespace sensa
