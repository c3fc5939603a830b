#include <iostream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "zerostylus_cli/commands.hpp"

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("zerostylus"));
  return zerostylus::cli::run(argc, argv, std::cout, std::cerr);
}
