#include "zsre/logging.hpp"

#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>

namespace zsre {

std::shared_ptr<spdlog::logger> logger() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto log = spdlog::stderr_color_mt("zsre");
    log->set_pattern("[%H:%M:%S] [%l] %v");
    const char* env = std::getenv("ZSRE_LOG");
    const std::string level = env ? env : "info";
    if (level == "error") log->set_level(spdlog::level::err);
    else if (level == "debug") log->set_level(spdlog::level::debug);
    else log->set_level(spdlog::level::info);
    return log;
  }();
  return instance;
}

}  // namespace zsre
