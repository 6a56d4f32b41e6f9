#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qosbridge {

// Every failure surfaced by the library carries one of these codes. The
// kebab-case spelling returned by to_string() is part of the wire contract
// (daemon socket protocol, REST error bodies, CNI error details).
enum class Errc {
  // cni-protocol
  missing_command,
  missing_container_id,
  malformed_config,
  unsupported_version,
  missing_prev_result,
  host_network_unsupported,
  check_failed,
  // fwmark-registry
  allocation_exhausted,
  persistence_failure,
  malformed_mask,
  duplicate_software_name,
  // qos-model
  qos_unmappable,
  unknown_five_qi,
  invalid_requirement,
  duplicate_five_qi,
  missing_default,
  invalid_profile,
  // enforcement-planner
  incomplete_binding,
  backend_failure,
  // qos-daemon
  duplicate_container,
  daemon_unreachable,
  network_rejection,
  not_implemented,
  // nef-emulator
  not_found,
  conflict,
  dependency_violation,
  bad_request,
  emulator_unreachable,
};

std::string_view to_string(Errc code) noexcept;

// Inverse of to_string(); unknown names map to bad_request.
Errc errc_from_string(std::string_view name) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg) : std::runtime_error(msg), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace qosbridge
