#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "qosbridge/daemon_api.hpp"
#include "qosbridge/error.hpp"
#include "qosbridge/qos.hpp"

namespace qosbridge::cni {

enum class Command { add, del, check, version };

std::string_view to_string(Command c) noexcept;

// Versions this plugin accepts in cniVersion and reports from VERSION.
const std::vector<std::string>& supported_versions();

inline constexpr const char* kDefaultDaemonSocket = "/run/qosd/qosd.sock";

struct NetConf {
  std::string cni_version;
  std::string network_name;
  std::string plugin_type;
  std::optional<nlohmann::json> prev_result;
  std::optional<QosRequirement> traffic_priority;  // "trafficPriority"
  std::optional<QosRequirement> runtime_qos;       // "runtimeConfig": {"trafficPriority": {...}}
  std::string daemon_socket;                       // "daemonSocket", empty = default
};

struct Invocation {
  Command command = Command::version;
  std::string container_id;
  std::string netns_path;
  std::string interface_name;
  std::vector<std::pair<std::string, std::string>> extra_args;  // CNI_ARGS, in order
  NetConf net_conf;
};

// Validates the environment and the configuration document. For VERSION only
// the cniVersion field is looked at, and a document that does not parse is
// accepted.
Invocation parse_invocation(const std::map<std::string, std::string>& env, std::string_view stdin_bytes);

// runtimeConfig beats trafficPriority beats CNI_ARGS. Each source is taken
// whole; fields are not merged across sources.
std::optional<QosRequirement> effective_requirement(const Invocation& inv);

// First IPv4 address of prevResult (else first IPv6), prefix length removed.
// Throws host-network-unsupported when prevResult carries no address.
std::string pod_ip_from_prev_result(const nlohmann::json& prev_result);

struct Outcome {
  int exit_code = 0;
  std::string stdout_text;
};

// CNI error document: {"cniVersion","code","msg","details"}.
//   1 incompatible version, 4 bad environment, 6 undecodable config,
//   7 invalid config, 11 daemon unreachable (try again later),
//   100+ plugin specific (see cni_error_code).
int cni_error_code(Errc code) noexcept;
Outcome error_outcome(const Error& e, const std::string& cni_version);

Outcome run_add(const Invocation& inv, DaemonClient& daemon);
Outcome run_del(const Invocation& inv, DaemonClient& daemon);
Outcome run_check(const Invocation& inv, DaemonClient& daemon);
Outcome run_version(const Invocation& inv);

using DaemonConnector = std::function<std::unique_ptr<DaemonClient>(const std::filesystem::path& socket)>;

// Whole plugin: parse, dispatch, render errors. Never throws.
Outcome run_plugin(const std::map<std::string, std::string>& env, std::string_view stdin_bytes,
                   const DaemonConnector& connect);

}  // namespace qosbridge::cni
