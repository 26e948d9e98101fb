#pragma once

#include <string>

namespace ff::log {

enum class Level { quiet = 0, info = 1, debug = 2 };

/// Verbosity from the FF_LOG environment variable ("info" or "debug").
Level level();

void info(const std::string& msg);
void debug(const std::string& msg);

}  // namespace ff::log
