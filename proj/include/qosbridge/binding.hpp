#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "qosbridge/fwmark.hpp"
#include "qosbridge/qos.hpp"

namespace qosbridge {

// A QoS flow inside a PDU session.
struct QosFlowRef {
  std::string session_id;
  std::uint32_t qfi = 0;

  friend auto operator<=>(const QosFlowRef&, const QosFlowRef&) = default;
};

std::string to_string(const QosFlowRef& ref);

// The pod <-> fwmark <-> QoS flow association owned by the daemon.
struct FlowBinding {
  std::string container_id;
  std::string pod_ip;
  FwMark mark;
  QosRequirement requirement;
  FiveQiProfile profile;
  std::string radio_link_id;
  std::string pdu_session_id;
  std::uint32_t qfi = 0;
  std::chrono::system_clock::time_point created_at{};

  QosFlowRef flow() const { return {pdu_session_id, qfi}; }
};

nlohmann::json binding_to_json(const FlowBinding& b);
FlowBinding binding_from_json(const nlohmann::json& j);

}  // namespace qosbridge
