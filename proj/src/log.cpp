#include "ff/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace ff::log {

Level level() {
    static const Level lvl = [] {
        const char* env = std::getenv("FF_LOG");
        if (env == nullptr) return Level::quiet;
        if (std::strcmp(env, "debug") == 0) return Level::debug;
        if (std::strcmp(env, "info") == 0) return Level::info;
        return Level::quiet;
    }();
    return lvl;
}

void info(const std::string& msg) {
    if (level() >= Level::info) std::fprintf(stderr, "[ff] %s\n", msg.c_str());
}

void debug(const std::string& msg) {
    if (level() >= Level::debug) std::fprintf(stderr, "[ff:debug] %s\n", msg.c_str());
}

}  // namespace ff::log
