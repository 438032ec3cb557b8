#pragma once

#include <atomic>
#include <iostream>
#include <mutex>
#include <string>

namespace cfmimo {

enum class LogLevel { Quiet = 0, Warning = 1, Info = 2 };

inline std::atomic<LogLevel>& log_level() {
    static std::atomic<LogLevel> level{LogLevel::Warning};
    return level;
}

inline std::mutex& log_mutex() {
    static std::mutex m;
    return m;
}

inline void log_warning(const std::string& msg) {
    if (log_level().load() < LogLevel::Warning) return;
    std::lock_guard lock(log_mutex());
    std::cerr << "warning: " << msg << '\n';
}

inline void log_info(const std::string& msg) {
    if (log_level().load() < LogLevel::Info) return;
    std::lock_guard lock(log_mutex());
    std::cerr << msg << '\n';
}

}  // namespace cfmimo
