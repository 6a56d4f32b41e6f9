#include "qosbridge/qos.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <map>
#include <set>
#include <sstream>

#include "qosbridge/error.hpp"
#include "qosbridge/textio.hpp"

namespace qosbridge {

namespace {

constexpr std::string_view kDefaultProfiles =
    "# Illustrative 5QI profile table. These rows are examples for local\n"
    "# testing only and are NOT the standardized 3GPP values; operators are\n"
    "# expected to supply their own table.\n"
    "profile five-qi=80 type=non-GBR priority=68 delay-ms=10  per=1e-6\n"
    "profile five-qi=70 type=non-GBR priority=55 delay-ms=50  per=1e-6\n"
    "profile five-qi=9  type=non-GBR priority=90 delay-ms=300 per=1e-6\n"
    "profile five-qi=82 type=GBR     priority=19 delay-ms=10  per=1e-4 window-ms=2000 burst-bytes=255\n"
    "profile five-qi=3  type=GBR     priority=30 delay-ms=50  per=1e-3 window-ms=2000\n"
    "profile five-qi=4  type=GBR     priority=50 delay-ms=300 per=1e-6 window-ms=2000\n"
    "default 9\n";

std::uint64_t positive_uint(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<std::int64_t>() <= 0) {
    throw Error(Errc::malformed_config, std::string("trafficPriority.") + key + " must be a positive integer");
  }
  return v.get<std::uint64_t>();
}

}  // namespace

std::string_view to_string(PriorityClass pc) noexcept {
  switch (pc) {
    case PriorityClass::guaranteed: return "guaranteed";
    case PriorityClass::burstable: return "burstable";
    case PriorityClass::besteffort: return "besteffort";
  }
  return "besteffort";
}

std::optional<PriorityClass> parse_priority_class(std::string_view text) noexcept {
  if (text == "guaranteed") return PriorityClass::guaranteed;
  if (text == "burstable") return PriorityClass::burstable;
  if (text == "besteffort") return PriorityClass::besteffort;
  return std::nullopt;
}

std::string_view to_string(ResourceType rt) noexcept { return rt == ResourceType::gbr ? "GBR" : "non-GBR"; }

void QosRequirement::validate() const {
  if (latency_ms && *latency_ms == 0) throw Error(Errc::invalid_requirement, "latencyMs must be positive");
  if (guaranteed_kbps && *guaranteed_kbps == 0) throw Error(Errc::invalid_requirement, "guaranteedKbps must be positive");
  if (max_kbps && *max_kbps == 0) throw Error(Errc::invalid_requirement, "maxKbps must be positive");
  if (explicit_five_qi && (*explicit_five_qi < 1 || *explicit_five_qi > 255)) {
    throw Error(Errc::invalid_requirement, "fiveQi must be within 1-255");
  }
  if (guaranteed_kbps && max_kbps && *guaranteed_kbps > *max_kbps) {
    throw Error(Errc::invalid_requirement, "guaranteedKbps exceeds maxKbps");
  }
  if (guaranteed_kbps && priority_class && *priority_class != PriorityClass::guaranteed) {
    throw Error(Errc::invalid_requirement, "guaranteedKbps conflicts with priorityClass " +
                                               std::string(to_string(*priority_class)));
  }
}

QosRequirement requirement_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(Errc::malformed_config, "trafficPriority must be an object");
  QosRequirement req;
  if (j.contains("latencyMs")) req.latency_ms = static_cast<std::uint32_t>(positive_uint(j, "latencyMs"));
  if (j.contains("guaranteedKbps")) req.guaranteed_kbps = positive_uint(j, "guaranteedKbps");
  if (j.contains("maxKbps")) req.max_kbps = positive_uint(j, "maxKbps");
  if (j.contains("fiveQi")) {
    auto v = positive_uint(j, "fiveQi");
    if (v > 255) throw Error(Errc::malformed_config, "trafficPriority.fiveQi must be within 1-255");
    req.explicit_five_qi = static_cast<std::uint32_t>(v);
  }
  if (j.contains("priorityClass")) {
    const auto& v = j.at("priorityClass");
    auto pc = v.is_string() ? parse_priority_class(v.get<std::string>()) : std::nullopt;
    if (!pc) throw Error(Errc::malformed_config, "trafficPriority.priorityClass must be guaranteed|burstable|besteffort");
    req.priority_class = pc;
  }
  return req;
}

nlohmann::json requirement_to_json(const QosRequirement& req) {
  nlohmann::json j = nlohmann::json::object();
  if (req.latency_ms) j["latencyMs"] = *req.latency_ms;
  if (req.guaranteed_kbps) j["guaranteedKbps"] = *req.guaranteed_kbps;
  if (req.max_kbps) j["maxKbps"] = *req.max_kbps;
  if (req.priority_class) j["priorityClass"] = std::string(to_string(*req.priority_class));
  if (req.explicit_five_qi) j["fiveQi"] = *req.explicit_five_qi;
  return j;
}

nlohmann::json profile_to_json(const FiveQiProfile& p) {
  nlohmann::json j{{"fiveQi", p.five_qi},
                   {"resourceType", std::string(to_string(p.resource_type))},
                   {"priorityLevel", p.priority_level},
                   {"packetDelayBudgetMs", p.packet_delay_budget_ms},
                   {"packetErrorRate", p.packet_error_rate}};
  if (p.averaging_window_ms) j["averagingWindowMs"] = *p.averaging_window_ms;
  if (p.max_data_burst_bytes) j["maxDataBurstBytes"] = *p.max_data_burst_bytes;
  return j;
}

FiveQiProfile profile_from_json(const nlohmann::json& j) {
  FiveQiProfile p;
  p.five_qi = j.at("fiveQi").get<std::uint32_t>();
  p.resource_type = j.at("resourceType").get<std::string>() == "GBR" ? ResourceType::gbr : ResourceType::non_gbr;
  p.priority_level = j.at("priorityLevel").get<std::uint32_t>();
  p.packet_delay_budget_ms = j.at("packetDelayBudgetMs").get<std::uint32_t>();
  p.packet_error_rate = j.at("packetErrorRate").get<double>();
  if (j.contains("averagingWindowMs")) p.averaging_window_ms = j.at("averagingWindowMs").get<std::uint32_t>();
  if (j.contains("maxDataBurstBytes")) p.max_data_burst_bytes = j.at("maxDataBurstBytes").get<std::uint32_t>();
  return p;
}

ProfileTable::ProfileTable(std::vector<FiveQiProfile> profiles, std::uint32_t default_five_qi)
    : profiles_(std::move(profiles)), default_five_qi_(default_five_qi) {
  if (profiles_.empty()) throw Error(Errc::missing_default, "profile table is empty");
  std::set<std::uint32_t> seen;
  for (const auto& p : profiles_) {
    const auto id = std::to_string(p.five_qi);
    if (!seen.insert(p.five_qi).second) throw Error(Errc::duplicate_five_qi, "5QI " + id + " defined twice");
    if (p.five_qi < 1 || p.five_qi > 255) throw Error(Errc::invalid_profile, "5QI " + id + " outside 1-255");
    if (p.packet_delay_budget_ms == 0) throw Error(Errc::invalid_profile, "5QI " + id + ": delay budget must be positive");
    if (!(p.packet_error_rate > 0.0 && p.packet_error_rate <= 1.0)) {
      throw Error(Errc::invalid_profile, "5QI " + id + ": packet error rate must lie in (0,1]");
    }
    if (p.resource_type == ResourceType::gbr && !p.averaging_window_ms) {
      throw Error(Errc::invalid_profile, "5QI " + id + ": GBR profile needs an averaging window");
    }
    if (p.resource_type == ResourceType::non_gbr && p.averaging_window_ms) {
      throw Error(Errc::invalid_profile, "5QI " + id + ": averaging window is only valid for GBR");
    }
    if (p.averaging_window_ms && *p.averaging_window_ms == 0) {
      throw Error(Errc::invalid_profile, "5QI " + id + ": averaging window must be positive");
    }
    if (p.max_data_burst_bytes && *p.max_data_burst_bytes == 0) {
      throw Error(Errc::invalid_profile, "5QI " + id + ": burst size must be positive");
    }
  }
  const auto* def = find(default_five_qi_);
  if (!def) throw Error(Errc::missing_default, "default 5QI " + std::to_string(default_five_qi_) + " not in table");
  if (def->resource_type != ResourceType::non_gbr) {
    throw Error(Errc::invalid_profile, "default 5QI " + std::to_string(default_five_qi_) + " must be non-GBR");
  }
}

const FiveQiProfile& ProfileTable::default_profile() const { return *find(default_five_qi_); }

const FiveQiProfile* ProfileTable::find(std::uint32_t five_qi) const noexcept {
  for (const auto& p : profiles_) {
    if (p.five_qi == five_qi) return &p;
  }
  return nullptr;
}

ProfileTable load_profile_table(std::string_view document) {
  std::vector<FiveQiProfile> profiles;
  std::optional<std::uint32_t> default_five_qi;
  std::istringstream in{std::string(document)};
  std::string raw;
  int lineno = 0;
  auto fail = [&](const std::string& what) {
    throw Error(Errc::invalid_profile, "profile table line " + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, raw)) {
    ++lineno;
    auto line = textio::strip_comment(raw);
    if (line.empty()) continue;
    auto fields = textio::split_ws(line);
    if (fields[0] == "default") {
      auto v = fields.size() == 2 ? textio::parse_uint(fields[1]) : std::nullopt;
      if (!v) fail("expected 'default <5qi>'");
      default_five_qi = static_cast<std::uint32_t>(*v);
      continue;
    }
    if (fields[0] != "profile") fail("unknown directive '" + fields[0] + "'");
    std::map<std::string, std::string> kv;
    for (std::size_t i = 1; i < fields.size(); ++i) {
      auto eq = fields[i].find('=');
      if (eq == std::string::npos) fail("expected key=value, got '" + fields[i] + "'");
      kv[fields[i].substr(0, eq)] = fields[i].substr(eq + 1);
    }
    auto take_uint = [&](const char* key, bool required) -> std::optional<std::uint32_t> {
      auto it = kv.find(key);
      if (it == kv.end()) {
        if (required) fail(std::string("missing ") + key);
        return std::nullopt;
      }
      auto v = textio::parse_uint(it->second);
      if (!v || *v > 0xffffffffULL) fail(std::string("bad ") + key + " '" + it->second + "'");
      kv.erase(it);
      return static_cast<std::uint32_t>(*v);
    };
    FiveQiProfile p;
    p.five_qi = *take_uint("five-qi", true);
    p.priority_level = *take_uint("priority", true);
    p.packet_delay_budget_ms = *take_uint("delay-ms", true);
    p.averaging_window_ms = take_uint("window-ms", false);
    p.max_data_burst_bytes = take_uint("burst-bytes", false);
    if (auto it = kv.find("type"); it == kv.end()) {
      fail("missing type");
    } else {
      if (it->second == "GBR") p.resource_type = ResourceType::gbr;
      else if (it->second == "non-GBR") p.resource_type = ResourceType::non_gbr;
      else fail("type must be GBR or non-GBR");
      kv.erase(it);
    }
    if (auto it = kv.find("per"); it == kv.end()) {
      fail("missing per");
    } else {
      try {
        std::size_t used = 0;
        p.packet_error_rate = std::stod(it->second, &used);
        if (used != it->second.size()) fail("bad per '" + it->second + "'");
      } catch (const std::logic_error&) {
        fail("bad per '" + it->second + "'");
      }
      kv.erase(it);
    }
    if (!kv.empty()) fail("unknown key '" + kv.begin()->first + "'");
    profiles.push_back(p);
  }
  if (!default_five_qi) throw Error(Errc::missing_default, "profile table has no 'default' line");
  return ProfileTable(std::move(profiles), *default_five_qi);
}

std::string_view default_profile_table_document() { return kDefaultProfiles; }

const FiveQiProfile& map_requirement(const QosRequirement& req, const ProfileTable& table) {
  req.validate();
  if (req.explicit_five_qi) {
    if (const auto* p = table.find(*req.explicit_five_qi)) return *p;
    throw Error(Errc::unknown_five_qi, "5QI " + std::to_string(*req.explicit_five_qi) + " is not in the profile table");
  }
  if (req.priority_class == PriorityClass::besteffort) return table.default_profile();
  if (!req.latency_ms && !req.guaranteed_kbps && !req.priority_class) return table.default_profile();

  const bool want_gbr = req.guaranteed_kbps.has_value() || req.priority_class == PriorityClass::guaranteed;
  const ResourceType wanted = want_gbr ? ResourceType::gbr : ResourceType::non_gbr;

  const FiveQiProfile* best = nullptr;
  for (const auto& p : table.profiles()) {
    if (p.resource_type != wanted) continue;
    if (req.latency_ms && p.packet_delay_budget_ms > *req.latency_ms) continue;
    if (!best || p.packet_delay_budget_ms > best->packet_delay_budget_ms ||
        (p.packet_delay_budget_ms == best->packet_delay_budget_ms &&
         (p.priority_level < best->priority_level ||
          (p.priority_level == best->priority_level && p.five_qi < best->five_qi)))) {
      best = &p;
    }
  }
  if (!best) {
    std::string what = std::string(to_string(wanted)) + " profile";
    if (req.latency_ms) what += " with delay budget <= " + std::to_string(*req.latency_ms) + " ms";
    throw Error(Errc::qos_unmappable, "no " + what);
  }
  return *best;
}

}  // namespace qosbridge
