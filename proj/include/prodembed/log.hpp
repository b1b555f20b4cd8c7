// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdlib>
#include <iostream>
#include <string>

namespace prodembed::log {

enum class Level { kQuiet = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

// Verbosity comes from PRODEMBED_LOG (quiet|warn|info|debug); default info.
inline Level level() {
  static const Level lv = [] {
    const char* env = std::getenv("PRODEMBED_LOG");
    if (env == nullptr) return Level::kInfo;
    const std::string v(env);
    if (v == "quiet") return Level::kQuiet;
    if (v == "warn") return Level::kWarn;
    if (v == "debug") return Level::kDebug;
    return Level::kInfo;
  }();
  return lv;
}

inline void warn(const std::string& msg) {
  if (level() >= Level::kWarn) std::cerr << "[warn] " << msg << '\n';
}

inline void info(const std::string& msg) {
  if (level() >= Level::kInfo) std::cerr << "[info] " << msg << '\n';
}

inline void debug(const std::string& msg) {
  if (level() >= Level::kDebug) std::cerr << "[debug] " << msg << '\n';
}

}  // namespace prodembed::log
