#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qosbridge/daemon.hpp"

namespace qosbridge {

// What the plugin and qosctl need from a daemon. Failures are thrown as
// Error; a transport problem is Errc::daemon_unreachable.
class DaemonClient {
 public:
  virtual ~DaemonClient() = default;
  virtual FlowBinding add(const std::string& container_id, const std::string& pod_ip, const QosRequirement& req) = 0;
  virtual void del(const std::string& container_id) = 0;
  virtual CheckReport check(const std::string& container_id) = 0;
  virtual std::string snapshot() = 0;
  virtual std::vector<FlowBinding> bindings() = 0;
};

class InProcessDaemonClient : public DaemonClient {
 public:
  explicit InProcessDaemonClient(QosDaemon& daemon) : daemon_(daemon) {}
  FlowBinding add(const std::string& id, const std::string& ip, const QosRequirement& req) override {
    return daemon_.handle_add(id, ip, req);
  }
  void del(const std::string& id) override { daemon_.handle_del(id); }
  CheckReport check(const std::string& id) override { return daemon_.handle_check(id); }
  std::string snapshot() override { return daemon_.snapshot_state(); }
  std::vector<FlowBinding> bindings() override { return daemon_.bindings(); }

 private:
  QosDaemon& daemon_;
};

// Request/response protocol over a Unix stream socket. One JSON document per
// line in each direction, one request per connection:
//
//   {"op":"add","containerId":"abc","podIp":"10.244.1.5","requirement":{"latencyMs":10}}
//       -> {"ok":true,"binding":{...}}
//   {"op":"del","containerId":"abc"}        -> {"ok":true}
//   {"op":"check","containerId":"abc"}      -> {"ok":true,"report":{"pass":true,...}}
//   {"op":"snapshot"}                       -> {"ok":true,"snapshot":"...","bindings":[...]}
//
// Failures: {"ok":false,"error":{"code":"allocation-exhausted","message":"..."}}
nlohmann::json dispatch_request(QosDaemon& daemon, const nlohmann::json& request);

class DaemonSocketServer {
 public:
  DaemonSocketServer(QosDaemon& daemon, std::filesystem::path socket_path);
  ~DaemonSocketServer();

  DaemonSocketServer(const DaemonSocketServer&) = delete;
  DaemonSocketServer& operator=(const DaemonSocketServer&) = delete;

  // Binds (replacing a stale socket file) and accepts on a background thread.
  void start();
  // Blocks accepting on the calling thread until stop().
  void serve();
  void stop();
  // Makes serve() return soon. Async-signal-safe.
  void request_stop() noexcept { stopping_ = true; }

 private:
  void bind_socket();
  void handle_connection(int fd);

  QosDaemon& daemon_;
  std::filesystem::path path_;
  int listen_fd_ = -1;
  std::atomic<bool> stopping_{false};
  std::thread thread_;
  std::vector<std::thread> workers_;
  std::mutex workers_mutex_;
};

class SocketDaemonClient : public DaemonClient {
 public:
  explicit SocketDaemonClient(std::filesystem::path socket_path) : path_(std::move(socket_path)) {}

  FlowBinding add(const std::string& id, const std::string& ip, const QosRequirement& req) override;
  void del(const std::string& id) override;
  CheckReport check(const std::string& id) override;
  std::string snapshot() override;
  std::vector<FlowBinding> bindings() override;

 private:
  nlohmann::json call(const nlohmann::json& request);

  std::filesystem::path path_;
};

}  // namespace qosbridge
