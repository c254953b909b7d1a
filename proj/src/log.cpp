#include "fcde/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>
#include <set>
#include <string>

namespace fcde::log {
namespace {

std::atomic<Level> g_level{Level::Warn};
std::mutex g_mutex;
std::set<std::string, std::less<>> g_seen;

}  // namespace

void set_level(Level level) { g_level = level; }
Level level() { return g_level; }

void warn(std::string_view message) {
  if (g_level == Level::Quiet) return;
  std::lock_guard lock(g_mutex);
  std::cerr << "warning: " << message << '\n';
}

void info(std::string_view message) {
  if (g_level != Level::Info) return;
  std::lock_guard lock(g_mutex);
  std::cerr << message << '\n';
}

void warn_once(std::string_view key, std::string_view message) {
  {
    std::lock_guard lock(g_mutex);
    if (g_seen.find(key) != g_seen.end()) return;
    g_seen.emplace(key);
  }
  warn(message);
}

}  // namespace fcde::log
