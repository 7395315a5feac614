#pragma once

#include <memory>

#include <spdlog/spdlog.h>

namespace zsre {

// stderr logger; ZSRE_LOG={error,info,debug} sets the level (default info).
std::shared_ptr<spdlog::logger> logger();

}  // namespace zsre
