#pragma once

#include <filesystem>
#include <string_view>

namespace clarity {

/// Location of a bundled resource file. The CLARITY_RESOURCES environment
/// variable overrides the directory configured at build time.
std::filesystem::path resource_path(std::string_view name);

}  // namespace clarity
