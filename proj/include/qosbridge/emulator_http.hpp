#pragma once

#include <memory>
#include <string>
#include <thread>

#include "qosbridge/emulator.hpp"

namespace httplib {
class Server;
class Client;
}  // namespace httplib

namespace qosbridge {

// REST front end for an Emulator.
//
//   POST   /radio-links                      {}                              -> RadioLink
//   PUT    /radio-links/{id}                 {"state":"up"|"down"}           -> RadioLink
//   DELETE /radio-links/{id}[?cascade=1][&idempotent=1]
//   POST   /pdu-sessions                     {"radio_link_id"}               -> PduSession
//   DELETE /pdu-sessions/{id}[?cascade=1][&idempotent=1]
//   POST   /qos-flows                        QosFlowRequest                  -> QosFlow
//   DELETE /qos-flows/{session}/{qfi}[?cascade=1][&idempotent=1]
//   POST   /filters                          {"mark","mask","session_id","qfi"} -> MarkFilter
//   DELETE /filters/{id}[?idempotent=1]
//   GET    /radio-links | /pdu-sessions | /qos-flows | /filters           -> JSON arrays
//   GET    /tree                                                             -> text/plain
//   GET    /healthz                                                          -> {"status":"ok"}
//   POST   /classify                         {"mark"}                        -> {"default", "session_id", "qfi"}
//   POST   /transmit                         TransmitRequest                 -> Delivery
//
// /classify and /transmit are a simulation harness, not part of any 3GPP
// exposure API. Errors come back as {"error":{"code":"not-found","message":...}}
// with 400 (bad-request), 404 (not-found), 409 (conflict) or 422
// (dependency-violation).
class EmulatorServer {
 public:
  struct Options {
    // Sleep in real time until a packet's virtual arrival before answering
    // /transmit. For manual demos only.
    bool wall_clock = false;
  };

  explicit EmulatorServer(Emulator& emulator) : EmulatorServer(emulator, Options{}) {}
  EmulatorServer(Emulator& emulator, Options options);
  ~EmulatorServer();

  EmulatorServer(const EmulatorServer&) = delete;
  EmulatorServer& operator=(const EmulatorServer&) = delete;

  // Binds and serves on a background thread. port 0 picks a free port.
  // Returns the bound port.
  int start(const std::string& host, int port);

  // Blocks serving on the calling thread.
  bool listen(const std::string& host, int port);

  void stop();

  int port() const noexcept { return port_; }

 private:
  void install_routes();

  Emulator& emu_;
  Options options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

// EmulatorClient over the REST API. Transport errors surface as
// Errc::emulator_unreachable; server errors keep their code.
class HttpEmulatorClient : public EmulatorClient {
 public:
  // base_url like "http://127.0.0.1:8080".
  explicit HttpEmulatorClient(const std::string& base_url);
  ~HttpEmulatorClient() override;

  RadioLink create_radio_link() override;
  void delete_radio_link(const std::string& id, DeleteOptions opts) override;
  PduSession create_pdu_session(const std::string& radio_link_id) override;
  void delete_pdu_session(const std::string& id, DeleteOptions opts) override;
  QosFlow create_qos_flow(const QosFlowRequest& req) override;
  void delete_qos_flow(const QosFlowRef& ref, DeleteOptions opts) override;
  MarkFilter create_filter(std::uint32_t mark, std::uint32_t mask, const QosFlowRef& target) override;
  void delete_filter(const std::string& id, DeleteOptions opts) override;
  std::vector<RadioLink> radio_links() override;
  std::vector<PduSession> pdu_sessions() override;
  std::vector<QosFlow> qos_flows() override;
  std::vector<MarkFilter> filters() override;
  Classification classify(std::uint32_t mark) override;
  Delivery transmit(const TransmitRequest& req) override;
  std::string dump_tree() override;

  bool healthy();

 private:
  std::string base_url_;
  std::unique_ptr<httplib::Client> client_;
  std::mutex mutex_;  // httplib::Client is not safe for concurrent requests
};

}  // namespace qosbridge
