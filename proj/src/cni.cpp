#include "qosbridge/cni.hpp"

#include <algorithm>

#include "qosbridge/textio.hpp"

namespace qosbridge::cni {

using nlohmann::json;

std::string_view to_string(Command c) noexcept {
  switch (c) {
    case Command::add: return "ADD";
    case Command::del: return "DEL";
    case Command::check: return "CHECK";
    case Command::version: return "VERSION";
  }
  return "?";
}

const std::vector<std::string>& supported_versions() {
  static const std::vector<std::string> v{"0.3.0", "0.3.1", "0.4.0", "1.0.0"};
  return v;
}

namespace {

constexpr const char* kFallbackVersion = "1.0.0";

const char* kArgKeys[] = {"latencyMs", "fiveQi", "guaranteedKbps", "maxKbps", "priorityClass"};

std::string env_or_empty(const std::map<std::string, std::string>& env, const char* key) {
  auto it = env.find(key);
  return it == env.end() ? std::string{} : it->second;
}

std::optional<Command> parse_command(const std::string& s) {
  if (s == "ADD") return Command::add;
  if (s == "DEL") return Command::del;
  if (s == "CHECK") return Command::check;
  if (s == "VERSION") return Command::version;
  return std::nullopt;
}

std::vector<std::pair<std::string, std::string>> parse_cni_args(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find(';', pos);
    if (end == std::string::npos) end = text.size();
    std::string item = text.substr(pos, end - pos);
    pos = end + 1;
    if (item.empty()) continue;
    auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(Errc::malformed_config, "CNI_ARGS entry '" + item + "' is not key=value");
    }
    out.emplace_back(item.substr(0, eq), item.substr(eq + 1));
  }
  return out;
}

std::optional<QosRequirement> requirement_from_args(const std::vector<std::pair<std::string, std::string>>& args) {
  json j = json::object();
  for (const auto& [k, v] : args) {
    if (std::find(std::begin(kArgKeys), std::end(kArgKeys), k) == std::end(kArgKeys)) continue;
    if (k == "priorityClass") {
      j[k] = v;
      continue;
    }
    auto n = textio::parse_uint(v);
    if (!n) throw Error(Errc::malformed_config, "CNI_ARGS " + k + "=" + v + " is not a number");
    j[k] = *n;
  }
  if (j.empty()) return std::nullopt;
  return requirement_from_json(j);
}

std::string version_of(std::string_view stdin_bytes) {
  try {
    auto doc = json::parse(stdin_bytes);
    if (doc.is_object() && doc.contains("cniVersion") && doc["cniVersion"].is_string()) {
      return doc["cniVersion"].get<std::string>();
    }
  } catch (const json::exception&) {
  }
  return kFallbackVersion;
}

Outcome ok(std::string text) { return {0, std::move(text)}; }

}  // namespace

Invocation parse_invocation(const std::map<std::string, std::string>& env, std::string_view stdin_bytes) {
  Invocation inv;
  const std::string cmd = env_or_empty(env, "CNI_COMMAND");
  if (cmd.empty()) throw Error(Errc::missing_command, "CNI_COMMAND is not set");
  auto command = parse_command(cmd);
  if (!command) throw Error(Errc::missing_command, "CNI_COMMAND '" + cmd + "' is not ADD, DEL, CHECK or VERSION");
  inv.command = *command;

  if (inv.command == Command::version) {
    inv.net_conf.cni_version = version_of(stdin_bytes);
    return inv;
  }

  inv.container_id = env_or_empty(env, "CNI_CONTAINERID");
  if (inv.container_id.empty()) throw Error(Errc::missing_container_id, "CNI_CONTAINERID is not set");
  inv.netns_path = env_or_empty(env, "CNI_NETNS");
  inv.interface_name = env_or_empty(env, "CNI_IFNAME");
  inv.extra_args = parse_cni_args(env_or_empty(env, "CNI_ARGS"));

  json doc;
  try {
    doc = json::parse(stdin_bytes);
  } catch (const json::parse_error& e) {
    throw Error(Errc::malformed_config, std::string("network configuration is not JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(Errc::malformed_config, "network configuration must be a JSON object");

  auto& nc = inv.net_conf;
  auto str_field = [&](const char* key, bool required) -> std::string {
    if (!doc.contains(key)) {
      if (required) throw Error(Errc::malformed_config, std::string("network configuration lacks ") + key);
      return {};
    }
    if (!doc[key].is_string()) throw Error(Errc::malformed_config, std::string(key) + " must be a string");
    return doc[key].get<std::string>();
  };
  nc.cni_version = str_field("cniVersion", true);
  const auto& sv = supported_versions();
  if (std::find(sv.begin(), sv.end(), nc.cni_version) == sv.end()) {
    throw Error(Errc::unsupported_version, "cniVersion " + nc.cni_version + " is not supported");
  }
  nc.network_name = str_field("name", false);
  nc.plugin_type = str_field("type", false);
  nc.daemon_socket = str_field("daemonSocket", false);
  if (doc.contains("prevResult") && !doc["prevResult"].is_null()) {
    if (!doc["prevResult"].is_object()) throw Error(Errc::malformed_config, "prevResult must be an object");
    nc.prev_result = doc["prevResult"];
  }
  if (doc.contains("trafficPriority")) nc.traffic_priority = requirement_from_json(doc["trafficPriority"]);
  if (doc.contains("runtimeConfig")) {
    const auto& rc = doc["runtimeConfig"];
    if (!rc.is_object()) throw Error(Errc::malformed_config, "runtimeConfig must be an object");
    if (rc.contains("trafficPriority")) nc.runtime_qos = requirement_from_json(rc["trafficPriority"]);
  }
  // Surfaces bad CNI_ARGS values early, even when another source wins.
  (void)requirement_from_args(inv.extra_args);
  return inv;
}

std::optional<QosRequirement> effective_requirement(const Invocation& inv) {
  if (inv.net_conf.runtime_qos) return inv.net_conf.runtime_qos;
  if (inv.net_conf.traffic_priority) return inv.net_conf.traffic_priority;
  return requirement_from_args(inv.extra_args);
}

std::string pod_ip_from_prev_result(const json& prev) {
  std::optional<std::string> v4, v6;
  if (prev.contains("ips") && prev["ips"].is_array()) {
    for (const auto& ip : prev["ips"]) {
      if (!ip.is_object() || !ip.contains("address") || !ip["address"].is_string()) continue;
      std::string addr = ip["address"].get<std::string>();
      addr = addr.substr(0, addr.find('/'));
      if (addr.find(':') != std::string::npos) {
        if (!v6) v6 = addr;
      } else if (!v4) {
        v4 = addr;
      }
    }
  }
  if (v4) return *v4;
  if (v6) return *v6;
  throw Error(Errc::host_network_unsupported, "prevResult carries no pod address (host-network pod?)");
}

int cni_error_code(Errc code) noexcept {
  switch (code) {
    case Errc::unsupported_version: return 1;
    case Errc::missing_command:
    case Errc::missing_container_id: return 4;
    case Errc::malformed_config: return 6;
    case Errc::missing_prev_result:
    case Errc::invalid_requirement: return 7;
    case Errc::daemon_unreachable: return 11;
    case Errc::allocation_exhausted: return 101;
    case Errc::qos_unmappable: return 102;
    case Errc::unknown_five_qi: return 103;
    case Errc::network_rejection: return 104;
    case Errc::backend_failure: return 105;
    case Errc::check_failed: return 106;
    case Errc::host_network_unsupported: return 107;
    case Errc::duplicate_container: return 108;
    case Errc::persistence_failure: return 109;
    case Errc::emulator_unreachable: return 110;
    case Errc::not_implemented: return 111;
    default: return 199;
  }
}

Outcome error_outcome(const Error& e, const std::string& cni_version) {
  json doc{{"cniVersion", cni_version.empty() ? kFallbackVersion : cni_version},
           {"code", cni_error_code(e.code())},
           {"msg", std::string(to_string(e.code()))},
           {"details", e.what()}};
  return {1, doc.dump() + "\n"};
}

Outcome run_add(const Invocation& inv, DaemonClient& daemon) {
  if (!inv.net_conf.prev_result) {
    throw Error(Errc::missing_prev_result, "traffic-priority must be chained after a plugin that creates interfaces");
  }
  const json& prev = *inv.net_conf.prev_result;
  if (auto req = effective_requirement(inv)) {
    daemon.add(inv.container_id, pod_ip_from_prev_result(prev), *req);
  }
  return ok(prev.dump() + "\n");
}

Outcome run_del(const Invocation& inv, DaemonClient& daemon) {
  try {
    daemon.del(inv.container_id);
  } catch (const Error& e) {
    // A pass-through pod never needed the daemon.
    if (e.code() != Errc::daemon_unreachable || effective_requirement(inv)) throw;
  }
  return ok("");
}

Outcome run_check(const Invocation& inv, DaemonClient& daemon) {
  if (!inv.net_conf.prev_result) throw Error(Errc::missing_prev_result, "CHECK needs prevResult");
  const bool expected = effective_requirement(inv).has_value();
  CheckReport report;
  try {
    report = daemon.check(inv.container_id);
  } catch (const Error& e) {
    if (e.code() == Errc::daemon_unreachable && !expected) return ok("");
    throw;
  }
  if (report.vacuous) {
    if (expected) throw Error(Errc::check_failed, "binding missing");
    return ok("");
  }
  if (!report.pass) throw Error(Errc::check_failed, report.failures());
  return ok("");
}

Outcome run_version(const Invocation& inv) {
  json doc{{"cniVersion", inv.net_conf.cni_version.empty() ? kFallbackVersion : inv.net_conf.cni_version},
           {"supportedVersions", supported_versions()}};
  return ok(doc.dump() + "\n");
}

Outcome run_plugin(const std::map<std::string, std::string>& env, std::string_view stdin_bytes,
                   const DaemonConnector& connect) {
  const std::string version = version_of(stdin_bytes);
  try {
    Invocation inv = parse_invocation(env, stdin_bytes);
    if (inv.command == Command::version) return run_version(inv);
    std::filesystem::path socket = inv.net_conf.daemon_socket.empty() ? kDefaultDaemonSocket
                                                                       : inv.net_conf.daemon_socket;
    auto daemon = connect(socket);
    switch (inv.command) {
      case Command::add: return run_add(inv, *daemon);
      case Command::del: return run_del(inv, *daemon);
      case Command::check: return run_check(inv, *daemon);
      case Command::version: break;
    }
    return run_version(inv);
  } catch (const Error& e) {
    return error_outcome(e, version);
  } catch (const std::exception& e) {
    return error_outcome(Error(Errc::backend_failure, e.what()), version);
  }
}

}  // namespace qosbridge::cni
