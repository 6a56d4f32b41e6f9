#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace qosbridge {

enum class PriorityClass { guaranteed, burstable, besteffort };
enum class ResourceType { gbr, non_gbr };

std::string_view to_string(PriorityClass pc) noexcept;
std::optional<PriorityClass> parse_priority_class(std::string_view text) noexcept;
std::string_view to_string(ResourceType rt) noexcept;

// What a pod asks of the network.
struct QosRequirement {
  std::optional<std::uint32_t> latency_ms;
  std::optional<std::uint64_t> guaranteed_kbps;
  std::optional<std::uint64_t> max_kbps;
  std::optional<PriorityClass> priority_class;
  std::optional<std::uint32_t> explicit_five_qi;

  bool empty() const noexcept {
    return !latency_ms && !guaranteed_kbps && !max_kbps && !priority_class && !explicit_five_qi;
  }

  // Throws Errc::invalid_requirement on zero values, out-of-range 5QI or
  // guaranteed_kbps > max_kbps.
  void validate() const;

  friend bool operator==(const QosRequirement&, const QosRequirement&) = default;
};

// trafficPriority object: {latencyMs, fiveQi, guaranteedKbps, maxKbps, priorityClass}.
// Unknown keys are ignored; wrongly typed keys throw Errc::malformed_config.
QosRequirement requirement_from_json(const nlohmann::json& j);
nlohmann::json requirement_to_json(const QosRequirement& req);

struct FiveQiProfile {
  std::uint32_t five_qi = 0;
  ResourceType resource_type = ResourceType::non_gbr;
  std::uint32_t priority_level = 0;
  std::uint32_t packet_delay_budget_ms = 0;
  double packet_error_rate = 1e-6;
  std::optional<std::uint32_t> averaging_window_ms;
  std::optional<std::uint32_t> max_data_burst_bytes;

  friend bool operator==(const FiveQiProfile&, const FiveQiProfile&) = default;
};

nlohmann::json profile_to_json(const FiveQiProfile& p);
FiveQiProfile profile_from_json(const nlohmann::json& j);

class ProfileTable {
 public:
  // Validates every invariant; throws Errc::duplicate_five_qi,
  // Errc::missing_default or Errc::invalid_profile.
  ProfileTable(std::vector<FiveQiProfile> profiles, std::uint32_t default_five_qi);

  const std::vector<FiveQiProfile>& profiles() const noexcept { return profiles_; }
  std::uint32_t default_five_qi() const noexcept { return default_five_qi_; }
  const FiveQiProfile& default_profile() const;
  const FiveQiProfile* find(std::uint32_t five_qi) const noexcept;

 private:
  std::vector<FiveQiProfile> profiles_;
  std::uint32_t default_five_qi_;
};

// Profile table document, one directive per line ('#' comments):
//
//   profile five-qi=80 type=non-GBR priority=68 delay-ms=10 per=1e-6
//   profile five-qi=82 type=GBR priority=19 delay-ms=10 per=1e-4 window-ms=2000 burst-bytes=255
//   default 9
ProfileTable load_profile_table(std::string_view document);

// Illustrative table shipped with the daemon. Not normative 3GPP values.
std::string_view default_profile_table_document();

// Selects the profile a requirement maps onto:
//
//  1. explicit_five_qi wins outright (unknown-five-qi if absent from table).
//  2. priority_class besteffort maps to the default profile.
//  3. A requirement without latency, guaranteed rate or class maps to the
//     default profile.
//  4. Otherwise the candidates are profiles with delay budget <= latency_ms
//     (when given) and resource type GBR iff guaranteed_kbps is given or the
//     class is guaranteed. The largest delay budget wins, then the lowest
//     priority level, then the lowest 5QI.
//
// max_kbps never constrains the choice; it only rate-limits the flow.
// Throws Errc::qos_unmappable when no profile qualifies.
const FiveQiProfile& map_requirement(const QosRequirement& req, const ProfileTable& table);

}  // namespace qosbridge
