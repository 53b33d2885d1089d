#include "clarity/resources.hpp"

#include <cstdlib>

#ifndef CLARITY_RESOURCE_DIR
#define CLARITY_RESOURCE_DIR "resources"
#endif

namespace clarity {

std::filesystem::path resource_path(std::string_view name) {
    if (const char* env = std::getenv("CLARITY_RESOURCES"); env && *env) return std::filesystem::path(env) / name;
    return std::filesystem::path(CLARITY_RESOURCE_DIR) / name;
}

}  // namespace clarity
