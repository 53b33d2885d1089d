#pragma once

#include <functional>
#include <string>

namespace clarity::log {

using Handler = std::function<void(const std::string&)>;

/// Emits a warning through the installed handler (stderr by default).
void warn(const std::string& message);

void info(const std::string& message);

/// Replaces the warning handler and returns the previous one. Passing an
/// empty handler restores the stderr default.
Handler set_warning_handler(Handler handler);

void set_verbose(bool verbose);

}  // namespace clarity::log
