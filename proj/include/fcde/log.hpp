#pragma once

#include <string_view>

namespace fcde::log {

enum class Level { Quiet, Warn, Info };

void set_level(Level level);
Level level();

void warn(std::string_view message);
void info(std::string_view message);

/// Emits a warning the first time `key` is seen in this process; later calls only count.
void warn_once(std::string_view key, std::string_view message);

}  // namespace fcde::log
