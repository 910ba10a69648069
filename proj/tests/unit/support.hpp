#pragma once

#include <cstdlib>
#include <string>

inline std::string fixtures_dir() {
    if (const char* env = std::getenv("SURFMET_FIXTURES")) return env;
    return SURFMET_FIXTURES_DIR;
}

inline std::string fixture(const std::string& name) { return fixtures_dir() + "/" + name; }
