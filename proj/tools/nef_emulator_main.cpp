#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <csignal>
#include <iostream>

#include "qosbridge/emulator_http.hpp"

namespace {
qosbridge::EmulatorServer* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->stop();
}
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emulated 5G exposure API (radio links, PDU sessions, QoS flows, fwmark filters)"};
  std::string host = "127.0.0.1";
  int port = 8080;
  bool wall_clock = false;
  app.add_option("--host", host, "listen address");
  app.add_option("--port", port, "listen port (0 = any)");
  app.add_flag("--wall-clock", wall_clock, "sleep until each packet's virtual arrival in /transmit");
  CLI11_PARSE(app, argc, argv);
  spdlog::set_default_logger(spdlog::stderr_color_mt("nef-emulator"));

  qosbridge::Emulator emulator;
  qosbridge::EmulatorServer server(emulator, {wall_clock});
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  spdlog::info("nef-emulator listening on {}:{}", host, port);
  if (!server.listen(host, port)) {
    std::cerr << "nef-emulator: cannot listen on " << host << ":" << port << "\n";
    return 1;
  }
  return 0;
}
