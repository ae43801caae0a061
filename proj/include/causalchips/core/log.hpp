#pragma once

#include <string>

namespace causalchips::log {

enum class Level { error = 0, info = 1, debug = 2 };

void set_level(Level level);
Level level();
Level parse_level(const std::string& name); // "error" | "info" | "debug"

void error(const std::string& msg);
void info(const std::string& msg);
void debug(const std::string& msg);

} // namespace causalchips::log
