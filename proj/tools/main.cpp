#include "commands.hpp"

#include <spdlog/cfg/helpers.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("pstarmax");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* levels = std::getenv("PSTARMAX_LOG")) spdlog::cfg::helpers::load_levels(levels);
  return pstarmax::cli::run(argc, argv);
}
