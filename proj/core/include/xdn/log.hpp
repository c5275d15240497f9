#pragma once

// Diagnostic logging to stderr, filtered by XDN_LOG=error|info|debug
// (default info).

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string_view>

namespace xdn::log {

enum class Level { Error = 0, Info = 1, Debug = 2 };

inline Level threshold() {
  static const Level level = [] {
    const char* env = std::getenv("XDN_LOG");
    if (!env) return Level::Info;
    const std::string_view v(env);
    if (v == "error") return Level::Error;
    if (v == "debug") return Level::Debug;
    return Level::Info;
  }();
  return level;
}

inline bool enabled(Level l) { return static_cast<int>(l) <= static_cast<int>(threshold()); }

template <typename... Args>
void write(Level l, const Args&... args) {
  if (!enabled(l)) return;
  static std::mutex m;
  std::ostringstream os;
  os << (l == Level::Error ? "[error] " : l == Level::Info ? "[info] " : "[debug] ");
  (os << ... << args);
  os << '\n';
  std::lock_guard lock(m);
  std::cerr << os.str();
}

template <typename... Args>
void error(const Args&... args) { write(Level::Error, args...); }
template <typename... Args>
void info(const Args&... args) { write(Level::Info, args...); }
template <typename... Args>
void debug(const Args&... args) { write(Level::Debug, args...); }

}  // namespace xdn::log
