#include "qosbridge/daemon_api.hpp"

#include <poll.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "qosbridge/error.hpp"

namespace qosbridge {

using nlohmann::json;

namespace {

json error_body(Errc code, const std::string& message) {
  return {{"ok", false}, {"error", {{"code", std::string(to_string(code))}, {"message", message}}}};
}

sockaddr_un make_addr(const std::filesystem::path& path) {
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  const std::string s = path.string();
  if (s.size() >= sizeof(addr.sun_path)) throw Error(Errc::malformed_config, "socket path too long: " + s);
  std::memcpy(addr.sun_path, s.c_str(), s.size() + 1);
  return addr;
}

bool write_all(int fd, const std::string& data) {
  std::size_t off = 0;
  while (off < data.size()) {
    ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    off += static_cast<std::size_t>(n);
  }
  return true;
}

// Reads up to the first newline (or EOF).
bool read_line(int fd, std::string& line) {
  char buf[4096];
  for (;;) {
    ssize_t n = ::recv(fd, buf, sizeof buf, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    if (n == 0) return !line.empty();
    line.append(buf, static_cast<std::size_t>(n));
    auto nl = line.find('\n');
    if (nl != std::string::npos) {
      line.resize(nl);
      return true;
    }
  }
}

}  // namespace

json dispatch_request(QosDaemon& daemon, const json& request) {
  try {
    const std::string op = request.at("op").get<std::string>();
    if (op == "add") {
      auto req = requirement_from_json(request.value("requirement", json::object()));
      auto b = daemon.handle_add(request.at("containerId").get<std::string>(),
                                 request.at("podIp").get<std::string>(), req);
      return {{"ok", true}, {"binding", binding_to_json(b)}};
    }
    if (op == "del") {
      daemon.handle_del(request.at("containerId").get<std::string>());
      return {{"ok", true}};
    }
    if (op == "check") {
      auto r = daemon.handle_check(request.at("containerId").get<std::string>());
      return {{"ok", true}, {"report", check_report_to_json(r)}};
    }
    if (op == "snapshot") {
      json bindings = json::array();
      for (const auto& b : daemon.bindings()) bindings.push_back(binding_to_json(b));
      return {{"ok", true}, {"snapshot", daemon.snapshot_state()}, {"bindings", bindings}};
    }
    return error_body(Errc::bad_request, "unknown op '" + op + "'");
  } catch (const Error& e) {
    return error_body(e.code(), e.what());
  } catch (const json::exception& e) {
    return error_body(Errc::bad_request, e.what());
  } catch (const std::exception& e) {
    return error_body(Errc::backend_failure, e.what());
  }
}

DaemonSocketServer::DaemonSocketServer(QosDaemon& daemon, std::filesystem::path socket_path)
    : daemon_(daemon), path_(std::move(socket_path)) {}

DaemonSocketServer::~DaemonSocketServer() { stop(); }

void DaemonSocketServer::bind_socket() {
  if (listen_fd_ >= 0) return;
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::error_code ec;
  std::filesystem::remove(path_, ec);
  int fd = ::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw Error(Errc::backend_failure, std::string("socket: ") + std::strerror(errno));
  auto addr = make_addr(path_);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(fd, 128) < 0) {
    int err = errno;
    ::close(fd);
    throw Error(Errc::backend_failure, "cannot listen on " + path_.string() + ": " + std::strerror(err));
  }
  listen_fd_ = fd;
}

void DaemonSocketServer::start() {
  bind_socket();
  thread_ = std::thread([this] { serve(); });
}

void DaemonSocketServer::serve() {
  bind_socket();
  while (!stopping_) {
    pollfd p{listen_fd_, POLLIN, 0};
    int r = ::poll(&p, 1, 100);
    if (r <= 0) continue;
    int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) continue;
    std::lock_guard lock(workers_mutex_);
    workers_.emplace_back([this, fd] { handle_connection(fd); });
  }
}

void DaemonSocketServer::handle_connection(int fd) {
  std::string line;
  json response;
  if (!read_line(fd, line)) {
    ::close(fd);
    return;
  }
  try {
    response = dispatch_request(daemon_, json::parse(line));
  } catch (const json::exception& e) {
    response = error_body(Errc::bad_request, e.what());
  }
  write_all(fd, response.dump() + "\n");
  ::close(fd);
}

void DaemonSocketServer::stop() {
  stopping_ = true;
  if (thread_.joinable()) thread_.join();
  {
    std::lock_guard lock(workers_mutex_);
    for (auto& w : workers_) {
      if (w.joinable()) w.join();
    }
    workers_.clear();
  }
  if (listen_fd_ >= 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
}

// SocketDaemonClient

json SocketDaemonClient::call(const json& request) {
  int fd = ::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw Error(Errc::daemon_unreachable, std::string("socket: ") + std::strerror(errno));
  auto addr = make_addr(path_);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    int err = errno;
    ::close(fd);
    throw Error(Errc::daemon_unreachable, "cannot reach qosd at " + path_.string() + ": " + std::strerror(err));
  }
  std::string line;
  bool ok = write_all(fd, request.dump() + "\n") && read_line(fd, line);
  ::close(fd);
  if (!ok) throw Error(Errc::daemon_unreachable, "connection to qosd at " + path_.string() + " dropped");
  json response;
  try {
    response = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(Errc::daemon_unreachable, std::string("garbled reply from qosd: ") + e.what());
  }
  if (!response.value("ok", false)) {
    const auto& err = response.at("error");
    throw Error(errc_from_string(err.value("code", std::string{})), err.value("message", std::string{}));
  }
  return response;
}

FlowBinding SocketDaemonClient::add(const std::string& id, const std::string& ip, const QosRequirement& req) {
  auto r = call({{"op", "add"}, {"containerId", id}, {"podIp", ip}, {"requirement", requirement_to_json(req)}});
  return binding_from_json(r.at("binding"));
}

void SocketDaemonClient::del(const std::string& id) { call({{"op", "del"}, {"containerId", id}}); }

CheckReport SocketDaemonClient::check(const std::string& id) {
  return check_report_from_json(call({{"op", "check"}, {"containerId", id}}).at("report"));
}

std::string SocketDaemonClient::snapshot() { return call({{"op", "snapshot"}}).at("snapshot").get<std::string>(); }

std::vector<FlowBinding> SocketDaemonClient::bindings() {
  const auto r = call({{"op", "snapshot"}});
  std::vector<FlowBinding> out;
  for (const auto& b : r.at("bindings")) out.push_back(binding_from_json(b));
  return out;
}

}  // namespace qosbridge
