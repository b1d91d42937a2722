// avlabel/log.hpp

// Copyright 2026  The avlabel Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Minimal leveled logging to stderr. AVLABEL_LOG=debug|info|warn|error|off.

#pragma once

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <string_view>

namespace avlabel::log {

enum class Level { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3, kOff = 4 };

inline Level &threshold() {
  static Level level = [] {
    const char *e = std::getenv("AVLABEL_LOG");
    std::string_view v = e ? e : "warn";
    if (v == "debug") return Level::kDebug;
    if (v == "info") return Level::kInfo;
    if (v == "error") return Level::kError;
    if (v == "off") return Level::kOff;
    return Level::kWarn;
  }();
  return level;
}

inline void write(Level l, std::string_view msg) {
  if (l < threshold()) return;
  static std::mutex mu;
  static const char *tags[] = {"DEBUG", "INFO", "WARN", "ERROR"};
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << tags[static_cast<int>(l)] << " " << msg << "\n";
}

template <typename... Args>
void emit(Level l, const Args &...args) {
  if (l < threshold()) return;
  std::ostringstream os;
  (os << ... << args);
  write(l, os.str());
}

template <typename... Args> void debug(const Args &...a) { emit(Level::kDebug, a...); }
template <typename... Args> void info(const Args &...a) { emit(Level::kInfo, a...); }
template <typename... Args> void warn(const Args &...a) { emit(Level::kWarn, a...); }
template <typename... Args> void error(const Args &...a) { emit(Level::kError, a...); }

}  // namespace avlabel::log
