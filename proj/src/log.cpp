#include "clarity/log.hpp"

#include <iostream>
#include <mutex>

namespace clarity::log {

namespace {

std::mutex g_mutex;
Handler g_handler;
bool g_verbose = false;

}  // namespace

void warn(const std::string& message) {
    std::lock_guard lock(g_mutex);
    if (g_handler) {
        g_handler(message);
    } else {
        std::cerr << "warning: " << message << '\n';
    }
}

void info(const std::string& message) {
    std::lock_guard lock(g_mutex);
    if (g_verbose) std::cerr << message << '\n';
}

Handler set_warning_handler(Handler handler) {
    std::lock_guard lock(g_mutex);
    std::swap(g_handler, handler);
    return handler;
}

void set_verbose(bool verbose) {
    std::lock_guard lock(g_mutex);
    g_verbose = verbose;
}

}  // namespace clarity::log
