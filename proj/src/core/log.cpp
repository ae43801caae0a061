#include "causalchips/core/log.hpp"

#include "causalchips/core/error.hpp"

#include <iostream>
#include <mutex>

namespace causalchips::log {

namespace {
Level g_level = Level::info;
std::mutex g_mutex;

void emit(const char* tag, const std::string& msg) {
  std::lock_guard<std::mutex> lock(g_mutex);
  std::cerr << tag << msg << "\n";
}
} // namespace

void set_level(Level level) { g_level = level; }
Level level() { return g_level; }

Level parse_level(const std::string& name) {
  if (name == "error") return Level::error;
  if (name == "info") return Level::info;
  if (name == "debug") return Level::debug;
  fail(Errc::invalid_argument, "unknown log level '" + name + "'");
}

void error(const std::string& msg) { emit("[error] ", msg); }

void info(const std::string& msg) {
  if (g_level >= Level::info) emit("[info] ", msg);
}

void debug(const std::string& msg) {
  if (g_level >= Level::debug) emit("[debug] ", msg);
}

} // namespace causalchips::log
