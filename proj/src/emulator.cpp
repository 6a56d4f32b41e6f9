#include "qosbridge/emulator.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "qosbridge/error.hpp"
#include "qosbridge/textio.hpp"

namespace qosbridge {

namespace {

constexpr std::uint32_t kFirstFlowMinor = 0x10;
constexpr std::int64_t kUnitsPerBit = 1'000'000;  // bucket credit unit: 1e-6 bit

std::string minor_hex(std::uint32_t minor) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%x", minor);
  return buf;
}

std::uint32_t mark_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    auto v = textio::parse_hex32(j.get<std::string>());
    if (!v) throw Error(Errc::bad_request, "'" + j.get<std::string>() + "' is not a 32-bit hex value");
    return *v;
  }
  if (j.is_number_unsigned()) {
    auto v = j.get<std::uint64_t>();
    if (v <= 0xffffffffULL) return static_cast<std::uint32_t>(v);
  }
  throw Error(Errc::bad_request, "mark values must be hex strings or 32-bit integers");
}

}  // namespace

std::string format_ms(SimTime t) {
  const auto ns = t.count();
  const bool negative = ns < 0;
  const auto abs_ns = negative ? -ns : ns;
  std::string out = (negative ? "-" : "") + std::to_string(abs_ns / 1'000'000);
  if (auto frac = abs_ns % 1'000'000; frac != 0) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%06lld", static_cast<long long>(frac));
    std::string digits(buf);
    while (!digits.empty() && digits.back() == '0') digits.pop_back();
    out += "." + digits;
  }
  return out;
}

RadioLink Emulator::create_radio_link() {
  std::unique_lock lock(mutex_);
  RadioLink link{"link-" + std::to_string(next_link_++), true};
  links_.emplace(link.id, link);
  return link;
}

void Emulator::set_radio_link_state(const std::string& id, bool up) {
  std::unique_lock lock(mutex_);
  auto it = links_.find(id);
  if (it == links_.end()) throw Error(Errc::not_found, "radio link " + id);
  it->second.up = up;
}

void Emulator::delete_radio_link(const std::string& id, DeleteOptions opts) {
  std::unique_lock lock(mutex_);
  auto it = links_.find(id);
  if (it == links_.end()) {
    if (opts.idempotent) return;
    throw Error(Errc::not_found, "radio link " + id);
  }
  std::vector<std::string> dependents;
  for (const auto& [sid, s] : sessions_) {
    if (s.radio_link_id == id) dependents.push_back(sid);
  }
  if (!dependents.empty() && !opts.cascade) {
    throw Error(Errc::dependency_violation, "radio link " + id + " still carries session " + dependents.front());
  }
  for (const auto& sid : dependents) {
    std::erase_if(filters_, [&](const MarkFilter& f) { return f.target.session_id == sid; });
    std::erase_if(flows_, [&](const auto& kv) { return kv.first.session_id == sid; });
    sessions_.erase(sid);
  }
  links_.erase(it);
}

PduSession Emulator::create_pdu_session(const std::string& radio_link_id) {
  std::unique_lock lock(mutex_);
  auto it = links_.find(radio_link_id);
  if (it == links_.end()) throw Error(Errc::not_found, "radio link " + radio_link_id);
  if (!it->second.up) throw Error(Errc::dependency_violation, "radio link " + radio_link_id + " is down");
  PduSession session{"session-" + std::to_string(next_session_++), radio_link_id, {}};
  sessions_.emplace(session.id, session);
  return session;
}

void Emulator::delete_pdu_session(const std::string& id, DeleteOptions opts) {
  std::unique_lock lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) {
    if (opts.idempotent) return;
    throw Error(Errc::not_found, "PDU session " + id);
  }
  if (!it->second.qfis.empty() && !opts.cascade) {
    throw Error(Errc::dependency_violation, "PDU session " + id + " still has QoS flows");
  }
  std::erase_if(filters_, [&](const MarkFilter& f) { return f.target.session_id == id; });
  std::erase_if(flows_, [&](const auto& kv) { return kv.first.session_id == id; });
  sessions_.erase(it);
}

QosFlow Emulator::create_qos_flow(const QosFlowRequest& req) {
  if (!std::isfinite(req.delay_ms) || req.delay_ms < 0.0) {
    throw Error(Errc::bad_request, "delay_ms must be a non-negative number");
  }
  if (req.rate_kbps && *req.rate_kbps == 0) throw Error(Errc::bad_request, "rate_kbps must be positive");
  if (req.averaging_window_ms && *req.averaging_window_ms == 0) {
    throw Error(Errc::bad_request, "averaging_window_ms must be positive");
  }
  if (req.qfi && *req.qfi == 0) throw Error(Errc::bad_request, "qfi must be positive");

  std::unique_lock lock(mutex_);
  auto sit = sessions_.find(req.session_id);
  if (sit == sessions_.end()) throw Error(Errc::not_found, "PDU session " + req.session_id);
  auto& qfis = sit->second.qfis;

  std::uint32_t qfi = 1;
  if (req.qfi) {
    qfi = *req.qfi;
    if (std::binary_search(qfis.begin(), qfis.end(), qfi)) {
      throw Error(Errc::conflict, "QFI " + std::to_string(qfi) + " already exists in " + req.session_id);
    }
  } else {
    for (auto used : qfis) {
      if (used != qfi) break;
      ++qfi;
    }
  }

  std::set<std::uint32_t> minors;
  for (const auto& [ref, entry] : flows_) minors.insert(entry.flow.class_minor);
  std::uint32_t minor = kFirstFlowMinor;
  while (minors.contains(minor)) ++minor;

  QosFlow flow;
  flow.session_id = req.session_id;
  flow.qfi = qfi;
  flow.five_qi = req.five_qi;
  flow.delay = SimTime(std::llround(req.delay_ms * 1e6));
  flow.rate_kbps = req.rate_kbps;
  flow.averaging_window_ms = req.averaging_window_ms.value_or(kDefaultAveragingWindowMs);
  flow.class_minor = minor;

  qfis.insert(std::upper_bound(qfis.begin(), qfis.end(), qfi), qfi);
  flows_.emplace(flow.ref(), FlowEntry{flow});
  return flow;
}

bool Emulator::flow_has_filters_locked(const QosFlowRef& ref) const {
  return std::any_of(filters_.begin(), filters_.end(), [&](const MarkFilter& f) { return f.target == ref; });
}

void Emulator::delete_qos_flow(const QosFlowRef& ref, DeleteOptions opts) {
  std::unique_lock lock(mutex_);
  auto it = flows_.find(ref);
  if (it == flows_.end()) {
    if (opts.idempotent) return;
    throw Error(Errc::not_found, "QoS flow " + to_string(ref));
  }
  if (flow_has_filters_locked(ref)) {
    if (!opts.cascade) throw Error(Errc::dependency_violation, "QoS flow " + to_string(ref) + " is a filter target");
    std::erase_if(filters_, [&](const MarkFilter& f) { return f.target == ref; });
  }
  auto& qfis = sessions_.at(ref.session_id).qfis;
  qfis.erase(std::find(qfis.begin(), qfis.end(), ref.qfi));
  flows_.erase(it);
}

MarkFilter Emulator::create_filter(std::uint32_t mark, std::uint32_t mask, const QosFlowRef& target) {
  if ((mark & mask) != mark) {
    throw Error(Errc::bad_request, "mark " + textio::hex(mark) + " has bits outside mask " + textio::hex(mask));
  }
  if (mark == 0) throw Error(Errc::bad_request, "a filter must match a nonzero mark");
  std::unique_lock lock(mutex_);
  if (!flows_.contains(target)) throw Error(Errc::not_found, "QoS flow " + to_string(target));
  for (const auto& f : filters_) {
    if (f.match_mark == mark && f.match_mask == mask) {
      throw Error(Errc::conflict, "filter " + textio::hex(mark) + "/" + textio::hex(mask) + " exists (" + f.id + ")");
    }
  }
  MarkFilter filter{"filter-" + std::to_string(next_filter_++), mark, mask, target};
  filters_.push_back(filter);
  return filter;
}

void Emulator::delete_filter(const std::string& id, DeleteOptions opts) {
  std::unique_lock lock(mutex_);
  auto n = std::erase_if(filters_, [&](const MarkFilter& f) { return f.id == id; });
  if (n == 0 && !opts.idempotent) throw Error(Errc::not_found, "filter " + id);
}

std::vector<RadioLink> Emulator::radio_links() const {
  std::shared_lock lock(mutex_);
  std::vector<RadioLink> out;
  for (const auto& [id, l] : links_) out.push_back(l);
  return out;
}

std::vector<PduSession> Emulator::pdu_sessions() const {
  std::shared_lock lock(mutex_);
  std::vector<PduSession> out;
  for (const auto& [id, s] : sessions_) out.push_back(s);
  return out;
}

std::vector<QosFlow> Emulator::qos_flows() const {
  std::shared_lock lock(mutex_);
  std::vector<QosFlow> out;
  for (const auto& [ref, e] : flows_) out.push_back(e.flow);
  return out;
}

std::vector<MarkFilter> Emulator::filters() const {
  std::shared_lock lock(mutex_);
  return filters_;
}

Classification Emulator::classify(std::uint32_t mark) const {
  std::shared_lock lock(mutex_);
  for (const auto& f : filters_) {
    if ((mark & f.match_mask) == f.match_mark) return {f.target};
  }
  return {};
}

SimTime Emulator::depart_locked(FlowEntry& entry, SimTime send_time, std::size_t size_bytes) {
  auto& b = *entry.bucket;
  std::lock_guard lock(b.mutex);
  SimTime t0 = std::max(send_time, b.last_departure);
  if (!entry.flow.rate_kbps) {
    b.last_departure = t0;
    return t0;
  }
  const __int128 rate = static_cast<__int128>(*entry.flow.rate_kbps);  // credit units per ns
  const __int128 capacity = rate * entry.flow.averaging_window_ms * 1'000'000;
  const __int128 cost = static_cast<__int128>(size_bytes) * 8 * kUnitsPerBit;
  if (!b.primed) {
    b.primed = true;
    b.credit = 0;
    b.last_update = t0;
  }
  b.credit = std::min(capacity, b.credit + rate * (t0 - b.last_update).count());
  const __int128 need = std::min(cost, capacity);
  SimTime depart = t0;
  if (b.credit < need) {
    const __int128 deficit = need - b.credit;
    const auto wait = static_cast<std::int64_t>((deficit + rate - 1) / rate);
    depart = t0 + SimTime(wait);
    b.credit = std::min(capacity, b.credit + rate * wait);
  }
  b.credit -= cost;
  b.last_update = depart;
  b.last_departure = depart;
  return depart;
}

Delivery Emulator::transmit(const TransmitRequest& req) {
  std::shared_lock lock(mutex_);
  std::optional<QosFlowRef> target = req.flow;
  if (!target && req.mark) {
    for (const auto& f : filters_) {
      if ((*req.mark & f.match_mask) == f.match_mark) {
        target = f.target;
        break;
      }
    }
  }
  Delivery d;
  d.send_time = req.send_time;
  d.size_bytes = req.size_bytes;
  if (!target) {
    d.arrival_time = req.send_time;
    return d;
  }
  auto it = flows_.find(*target);
  if (it == flows_.end()) throw Error(Errc::not_found, "QoS flow " + to_string(*target));
  d.flow = target;
  d.arrival_time = depart_locked(it->second, req.send_time, req.size_bytes) + it->second.flow.delay;
  return d;
}

std::string Emulator::dump_tree() const {
  std::shared_lock lock(mutex_);
  std::vector<const QosFlow*> classes;
  for (const auto& [ref, e] : flows_) classes.push_back(&e.flow);
  std::sort(classes.begin(), classes.end(),
            [](const QosFlow* a, const QosFlow* b) { return a->class_minor < b->class_minor; });

  std::string out = "qdisc htb 1: root default 1\n";
  out += "class htb 1:1 parent 1: default delay 0ms rate unlimited\n";
  for (const auto* f : classes) {
    out += "class htb 1:" + minor_hex(f->class_minor) + " parent 1: session " + f->session_id + " qfi " +
           std::to_string(f->qfi) + " 5qi " + std::to_string(f->five_qi) + " delay " + format_ms(f->delay) + "ms rate ";
    if (f->rate_kbps) {
      out += std::to_string(*f->rate_kbps) + "kbit window " + std::to_string(f->averaging_window_ms) + "ms";
    } else {
      out += "unlimited";
    }
    out += "\n";
  }
  int prio = 1;
  for (const auto& filt : filters_) {
    const auto& flow = flows_.at(filt.target).flow;
    out += "filter parent 1: prio " + std::to_string(prio++) + " handle " + textio::hex(filt.match_mark) + "/" +
           textio::hex(filt.match_mask) + " fw classid 1:" + minor_hex(flow.class_minor) + "\n";
  }
  return out;
}

// AmfClient

namespace {
[[noreturn]] void amf_unsupported() {
  throw Error(Errc::not_implemented, "QoS configuration through the AMF control path is not implemented");
}
}  // namespace

RadioLink AmfClient::create_radio_link() { amf_unsupported(); }
void AmfClient::delete_radio_link(const std::string&, DeleteOptions) { amf_unsupported(); }
PduSession AmfClient::create_pdu_session(const std::string&) { amf_unsupported(); }
void AmfClient::delete_pdu_session(const std::string&, DeleteOptions) { amf_unsupported(); }
QosFlow AmfClient::create_qos_flow(const QosFlowRequest&) { amf_unsupported(); }
void AmfClient::delete_qos_flow(const QosFlowRef&, DeleteOptions) { amf_unsupported(); }
MarkFilter AmfClient::create_filter(std::uint32_t, std::uint32_t, const QosFlowRef&) { amf_unsupported(); }
void AmfClient::delete_filter(const std::string&, DeleteOptions) { amf_unsupported(); }
std::vector<RadioLink> AmfClient::radio_links() { amf_unsupported(); }
std::vector<PduSession> AmfClient::pdu_sessions() { amf_unsupported(); }
std::vector<QosFlow> AmfClient::qos_flows() { amf_unsupported(); }
std::vector<MarkFilter> AmfClient::filters() { amf_unsupported(); }
Classification AmfClient::classify(std::uint32_t) { amf_unsupported(); }
Delivery AmfClient::transmit(const TransmitRequest&) { amf_unsupported(); }
std::string AmfClient::dump_tree() { amf_unsupported(); }

// JSON

nlohmann::json to_json(const RadioLink& v) { return {{"id", v.id}, {"state", v.up ? "up" : "down"}}; }

nlohmann::json to_json(const PduSession& v) {
  return {{"id", v.id}, {"radio_link_id", v.radio_link_id}, {"qfis", v.qfis}};
}

nlohmann::json to_json(const QosFlow& v) {
  nlohmann::json j{{"session_id", v.session_id}, {"qfi", v.qfi},
                   {"five_qi", v.five_qi},       {"delay_ns", v.delay.count()},
                   {"delay_ms", v.delay_ms()},   {"averaging_window_ms", v.averaging_window_ms},
                   {"class", "1:" + minor_hex(v.class_minor)}};
  if (v.rate_kbps) j["rate_kbps"] = *v.rate_kbps;
  return j;
}

nlohmann::json to_json(const MarkFilter& v) {
  return {{"id", v.id},
          {"mark", textio::hex(v.match_mark)},
          {"mask", textio::hex(v.match_mask)},
          {"session_id", v.target.session_id},
          {"qfi", v.target.qfi}};
}

nlohmann::json to_json(const Delivery& v) {
  nlohmann::json j{{"default", !v.flow.has_value()},
                   {"send_time_ns", v.send_time.count()},
                   {"arrival_time_ns", v.arrival_time.count()},
                   {"size_bytes", v.size_bytes}};
  if (v.flow) {
    j["session_id"] = v.flow->session_id;
    j["qfi"] = v.flow->qfi;
  }
  return j;
}

nlohmann::json to_json(const QosFlowRequest& v) {
  nlohmann::json j{{"session_id", v.session_id}, {"five_qi", v.five_qi}, {"delay_ms", v.delay_ms}};
  if (v.rate_kbps) j["rate_kbps"] = *v.rate_kbps;
  if (v.averaging_window_ms) j["averaging_window_ms"] = *v.averaging_window_ms;
  if (v.qfi) j["qfi"] = *v.qfi;
  return j;
}

nlohmann::json to_json(const TransmitRequest& v) {
  nlohmann::json j{{"send_time_ns", v.send_time.count()}, {"size_bytes", v.size_bytes}};
  if (v.mark) j["mark"] = textio::hex(*v.mark);
  if (v.flow) {
    j["session_id"] = v.flow->session_id;
    j["qfi"] = v.flow->qfi;
  }
  return j;
}

RadioLink radio_link_from_json(const nlohmann::json& j) {
  return {j.at("id").get<std::string>(), j.value("state", std::string("up")) == "up"};
}

PduSession pdu_session_from_json(const nlohmann::json& j) {
  return {j.at("id").get<std::string>(), j.at("radio_link_id").get<std::string>(),
          j.value("qfis", std::vector<std::uint32_t>{})};
}

QosFlow qos_flow_from_json(const nlohmann::json& j) {
  QosFlow f;
  f.session_id = j.at("session_id").get<std::string>();
  f.qfi = j.at("qfi").get<std::uint32_t>();
  f.five_qi = j.at("five_qi").get<std::uint32_t>();
  f.delay = SimTime(j.at("delay_ns").get<std::int64_t>());
  if (j.contains("rate_kbps")) f.rate_kbps = j.at("rate_kbps").get<std::uint64_t>();
  f.averaging_window_ms = j.value("averaging_window_ms", kDefaultAveragingWindowMs);
  auto cls = j.value("class", std::string("1:0"));
  f.class_minor = static_cast<std::uint32_t>(std::stoul(cls.substr(cls.find(':') + 1), nullptr, 16));
  return f;
}

MarkFilter mark_filter_from_json(const nlohmann::json& j) {
  return {j.at("id").get<std::string>(), mark_from_json(j.at("mark")), mark_from_json(j.at("mask")),
          {j.at("session_id").get<std::string>(), j.at("qfi").get<std::uint32_t>()}};
}

Delivery delivery_from_json(const nlohmann::json& j) {
  Delivery d;
  if (!j.value("default", false)) d.flow = QosFlowRef{j.at("session_id").get<std::string>(), j.at("qfi").get<std::uint32_t>()};
  d.send_time = SimTime(j.at("send_time_ns").get<std::int64_t>());
  d.arrival_time = SimTime(j.at("arrival_time_ns").get<std::int64_t>());
  d.size_bytes = j.value("size_bytes", std::size_t{0});
  return d;
}

QosFlowRequest qos_flow_request_from_json(const nlohmann::json& j) {
  QosFlowRequest r;
  r.session_id = j.at("session_id").get<std::string>();
  r.five_qi = j.value("five_qi", std::uint32_t{0});
  r.delay_ms = j.value("delay_ms", 0.0);
  if (j.contains("rate_kbps")) r.rate_kbps = j.at("rate_kbps").get<std::uint64_t>();
  if (j.contains("averaging_window_ms")) r.averaging_window_ms = j.at("averaging_window_ms").get<std::uint32_t>();
  if (j.contains("qfi")) r.qfi = j.at("qfi").get<std::uint32_t>();
  return r;
}

TransmitRequest transmit_request_from_json(const nlohmann::json& j) {
  TransmitRequest r;
  r.send_time = SimTime(j.value("send_time_ns", std::int64_t{0}));
  r.size_bytes = j.value("size_bytes", std::size_t{0});
  if (j.contains("mark")) r.mark = mark_from_json(j.at("mark"));
  if (j.contains("session_id")) r.flow = QosFlowRef{j.at("session_id").get<std::string>(), j.at("qfi").get<std::uint32_t>()};
  return r;
}

}  // namespace qosbridge
