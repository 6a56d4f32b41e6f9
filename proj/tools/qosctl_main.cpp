#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <iostream>
#include <string>
#include <vector>

#include "qosbridge/qosctl.hpp"

int main(int argc, char** argv) {
  // Stdout is the report; diagnostics go to stderr.
  spdlog::set_default_logger(spdlog::stderr_color_st("qosctl"));
  spdlog::set_level(spdlog::level::err);
  std::vector<std::string> args(argv, argv + argc);
  return qosbridge::run_qosctl(args, std::cout, std::cerr);
}
