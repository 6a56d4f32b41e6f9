#include "qosbridge/error.hpp"

#include <array>
#include <utility>

namespace qosbridge {

namespace {

constexpr std::array<std::pair<Errc, std::string_view>, 28> kNames{{
    {Errc::missing_command, "missing-command"},
    {Errc::missing_container_id, "missing-container-id"},
    {Errc::malformed_config, "malformed-config"},
    {Errc::unsupported_version, "unsupported-version"},
    {Errc::missing_prev_result, "missing-prev-result"},
    {Errc::host_network_unsupported, "host-network-unsupported"},
    {Errc::check_failed, "check-failed"},
    {Errc::allocation_exhausted, "allocation-exhausted"},
    {Errc::persistence_failure, "persistence-failure"},
    {Errc::malformed_mask, "malformed-mask"},
    {Errc::duplicate_software_name, "duplicate-software-name"},
    {Errc::qos_unmappable, "qos-unmappable"},
    {Errc::unknown_five_qi, "unknown-five-qi"},
    {Errc::invalid_requirement, "invalid-requirement"},
    {Errc::duplicate_five_qi, "duplicate-five-qi"},
    {Errc::missing_default, "missing-default"},
    {Errc::invalid_profile, "invalid-profile"},
    {Errc::incomplete_binding, "incomplete-binding"},
    {Errc::backend_failure, "backend-failure"},
    {Errc::duplicate_container, "duplicate-container"},
    {Errc::daemon_unreachable, "daemon-unreachable"},
    {Errc::network_rejection, "network-rejection"},
    {Errc::not_implemented, "not-implemented"},
    {Errc::not_found, "not-found"},
    {Errc::conflict, "conflict"},
    {Errc::dependency_violation, "dependency-violation"},
    {Errc::bad_request, "bad-request"},
    {Errc::emulator_unreachable, "emulator-unreachable"},
}};

}  // namespace

std::string_view to_string(Errc code) noexcept {
  for (const auto& [c, name] : kNames) {
    if (c == code) return name;
  }
  return "unknown";
}

Errc errc_from_string(std::string_view name) noexcept {
  for (const auto& [c, n] : kNames) {
    if (n == name) return c;
  }
  return Errc::bad_request;
}

}  // namespace qosbridge
