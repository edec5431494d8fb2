#pragma once

#include <sstream>
#include <string>

namespace starnet::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

void set_level(Level level);
Level level();
void write(Level level, const std::string& message);

namespace detail {
template <typename... Args>
std::string concat(const Args&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}
}  // namespace detail

template <typename... Args>
void info(const Args&... args) {
  if (level() <= Level::info) write(Level::info, detail::concat(args...));
}

template <typename... Args>
void warn(const Args&... args) {
  if (level() <= Level::warn) write(Level::warn, detail::concat(args...));
}

template <typename... Args>
void error(const Args&... args) {
  if (level() <= Level::error) write(Level::error, detail::concat(args...));
}

}  // namespace starnet::log
