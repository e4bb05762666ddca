#include "a2gnn/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <mutex>

namespace a2gnn {

namespace {

LogLevel parse_level() {
    const char* env = std::getenv("A2GNN_LOG");
    if (env == nullptr) return LogLevel::Info;
    if (std::strcmp(env, "error") == 0) return LogLevel::Error;
    if (std::strcmp(env, "debug") == 0) return LogLevel::Debug;
    return LogLevel::Info;
}

std::mutex& log_mutex() {
    static std::mutex m;
    return m;
}

void emit(const char* tag, const std::string& msg) {
    std::lock_guard<std::mutex> lock(log_mutex());
    std::fprintf(stderr, "[%s] %s\n", tag, msg.c_str());
}

} // namespace

LogLevel log_level() {
    static LogLevel level = parse_level();
    return level;
}

void log_error(const std::string& msg) {
    emit("error", msg);
}

void log_info(const std::string& msg) {
    if (log_level() >= LogLevel::Info) emit("info", msg);
}

void log_debug(const std::string& msg) {
    if (log_level() >= LogLevel::Debug) emit("debug", msg);
}

} // namespace a2gnn
