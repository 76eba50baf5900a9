#include "svclab/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace svclab {

namespace {
std::atomic<LogLevel> g_level{LogLevel::warn};
std::mutex g_mutex;
}  // namespace

void set_log_level(LogLevel level) { g_level = level; }
LogLevel log_level() { return g_level; }

void log_info(std::string_view msg) {
  if (g_level < LogLevel::info) return;
  std::lock_guard lock(g_mutex);
  std::clog << "[info] " << msg << '\n';
}

void log_warn(std::string_view msg) {
  if (g_level < LogLevel::warn) return;
  std::lock_guard lock(g_mutex);
  std::clog << "[warn] " << msg << '\n';
}

}  // namespace svclab
