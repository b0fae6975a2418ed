/*
 * Copyright 2026 The Drawering Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace drawering {

/// Invalid configuration, schema, or operation contract violation.
/// The CLI maps this to exit code 1.
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unrecoverable failure while a run is in flight (non-finite loss,
/// write failure). The CLI maps this to exit code 2.
class train_abort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class log_level { debug = 0, info = 1, warn = 2, error = 3, quiet = 4 };

// Verbosity comes from the DRAWERING_LOG environment variable:
// debug|info|warn|error|quiet. Default is warn.
inline log_level current_log_level() {
  static const log_level level = [] {
    const char* env = std::getenv("DRAWERING_LOG");
    if (!env) return log_level::warn;
    const std::string v(env);
    if (v == "debug") return log_level::debug;
    if (v == "info") return log_level::info;
    if (v == "warn") return log_level::warn;
    if (v == "error") return log_level::error;
    if (v == "quiet") return log_level::quiet;
    return log_level::warn;
  }();
  return level;
}

inline void log_msg(log_level level, const std::string& msg) {
  if (level < current_log_level()) return;
  static const char* names[] = {"debug", "info", "warn", "error"};
  std::fprintf(stderr, "[%s] %s\n", names[static_cast<int>(level)], msg.c_str());
}

inline void log_debug(const std::string& msg) { log_msg(log_level::debug, msg); }
inline void log_info(const std::string& msg) { log_msg(log_level::info, msg); }
inline void log_warn(const std::string& msg) { log_msg(log_level::warn, msg); }
inline void log_error(const std::string& msg) { log_msg(log_level::error, msg); }

}  // namespace drawering
