#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <csignal>
#include <iostream>
#include <map>

#include "qosbridge/daemon_api.hpp"
#include "qosbridge/error.hpp"

extern char** environ;

namespace {
qosbridge::DaemonSocketServer* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->request_stop();
}
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Traffic-priority QoS daemon"};
  std::string config_file;
  app.add_option("-c,--config", config_file, "JSON configuration file");
  CLI11_PARSE(app, argc, argv);
  spdlog::set_default_logger(spdlog::stderr_color_mt("qosd"));

  std::map<std::string, std::string> env;
  for (char** e = environ; *e; ++e) {
    std::string kv(*e);
    auto eq = kv.find('=');
    if (eq != std::string::npos) env.emplace(kv.substr(0, eq), kv.substr(eq + 1));
  }
  try {
    auto config = qosbridge::DaemonConfig::load(config_file, env);
    qosbridge::DaemonRuntime runtime(config);
    auto recovered = runtime.daemon().recover();
    if (!recovered.rolled_back.empty()) {
      spdlog::warn("qosd: rolled back {} interrupted ADD(s)", recovered.rolled_back.size());
    }
    qosbridge::DaemonSocketServer server(runtime.daemon(), config.socket_path);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    spdlog::info("qosd: serving on {}", config.socket_path.string());
    server.serve();
  } catch (const qosbridge::Error& e) {
    std::cerr << "qosd: " << qosbridge::to_string(e.code()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "qosd: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
