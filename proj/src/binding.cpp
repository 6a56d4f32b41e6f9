#include "qosbridge/binding.hpp"

#include <nlohmann/json.hpp>

#include "qosbridge/textio.hpp"

namespace qosbridge {

std::string to_string(const QosFlowRef& ref) { return ref.session_id + "/qfi=" + std::to_string(ref.qfi); }

nlohmann::json binding_to_json(const FlowBinding& b) {
  return {{"containerId", b.container_id},
          {"podIp", b.pod_ip},
          {"mark", textio::hex(b.mark.value())},
          {"requirement", requirement_to_json(b.requirement)},
          {"profile", profile_to_json(b.profile)},
          {"radioLinkId", b.radio_link_id},
          {"pduSessionId", b.pdu_session_id},
          {"qfi", b.qfi},
          {"createdAtMs", std::chrono::duration_cast<std::chrono::milliseconds>(b.created_at.time_since_epoch()).count()}};
}

FlowBinding binding_from_json(const nlohmann::json& j) {
  FlowBinding b;
  b.container_id = j.at("containerId").get<std::string>();
  b.pod_ip = j.at("podIp").get<std::string>();
  auto mark = textio::parse_hex32(j.at("mark").get<std::string>());
  if (!mark) throw nlohmann::json::type_error::create(302, "mark is not a hex value", &j);
  b.mark = FwMark(*mark);
  b.requirement = requirement_from_json(j.at("requirement"));
  b.profile = profile_from_json(j.at("profile"));
  b.radio_link_id = j.at("radioLinkId").get<std::string>();
  b.pdu_session_id = j.at("pduSessionId").get<std::string>();
  b.qfi = j.at("qfi").get<std::uint32_t>();
  b.created_at = std::chrono::system_clock::time_point(std::chrono::milliseconds(j.value("createdAtMs", std::int64_t{0})));
  return b;
}

}  // namespace qosbridge
