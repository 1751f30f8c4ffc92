#include "medrank/log.hpp"

#include <cstdlib>
#include <string_view>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace medrank {

void init_logging_from_env() {
  auto logger = spdlog::get("medrank");
  if (!logger) logger = spdlog::stderr_color_st("medrank");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");

  std::string_view level = "warn";
  if (const char* env = std::getenv("MEDRANK_LOG")) level = env;
  if (level == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (level == "info") {
    spdlog::set_level(spdlog::level::info);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    spdlog::set_level(spdlog::level::warn);
  }
}

}  // namespace medrank
