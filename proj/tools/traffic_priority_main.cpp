// CNI plugin entry point. Logs go to stderr only; stdout carries the result.
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <iostream>
#include <iterator>
#include <map>
#include <string>

#include "qosbridge/cni.hpp"

extern char** environ;

int main() {
  spdlog::set_default_logger(spdlog::stderr_color_st("traffic-priority"));
  spdlog::set_level(spdlog::level::warn);

  std::map<std::string, std::string> env;
  for (char** e = environ; *e; ++e) {
    std::string kv(*e);
    auto eq = kv.find('=');
    if (eq != std::string::npos) env.emplace(kv.substr(0, eq), kv.substr(eq + 1));
  }
  std::string input((std::istreambuf_iterator<char>(std::cin)), std::istreambuf_iterator<char>());

  auto outcome = qosbridge::cni::run_plugin(env, input, [](const std::filesystem::path& socket) {
    return std::make_unique<qosbridge::SocketDaemonClient>(socket);
  });
  std::cout << outcome.stdout_text << std::flush;
  return outcome.exit_code;
}
