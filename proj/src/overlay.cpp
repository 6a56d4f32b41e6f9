#include "qosbridge/overlay.hpp"

#include <arpa/inet.h>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "qosbridge/daemon.hpp"
#include "qosbridge/error.hpp"
#include "qosbridge/textio.hpp"

namespace qosbridge::overlay {

namespace {

std::array<std::uint8_t, 4> ipv4(const std::string& text) {
  std::array<std::uint8_t, 4> out{};
  if (::inet_pton(AF_INET, text.c_str(), out.data()) != 1) {
    throw Error(Errc::bad_request, "'" + text + "' is not an IPv4 address");
  }
  return out;
}

void put16(std::vector<std::uint8_t>& v, std::size_t at, std::uint16_t x) {
  v[at] = static_cast<std::uint8_t>(x >> 8);
  v[at + 1] = static_cast<std::uint8_t>(x);
}

std::uint16_t ip_checksum(const std::uint8_t* p, std::size_t n) {
  std::uint32_t sum = 0;
  for (std::size_t i = 0; i + 1 < n; i += 2) sum += (p[i] << 8) | p[i + 1];
  while (sum >> 16) sum = (sum & 0xFFFF) + (sum >> 16);
  return static_cast<std::uint16_t>(~sum);
}

// IPv4 header (protocol `proto`) followed by `body`.
std::vector<std::uint8_t> ip_packet(const std::string& src, const std::string& dst, std::uint8_t proto,
                                    const std::vector<std::uint8_t>& body) {
  std::vector<std::uint8_t> out(20, 0);
  out[0] = 0x45;
  put16(out, 2, static_cast<std::uint16_t>(20 + body.size()));
  out[8] = 64;
  out[9] = proto;
  auto s = ipv4(src), d = ipv4(dst);
  std::copy(s.begin(), s.end(), out.begin() + 12);
  std::copy(d.begin(), d.end(), out.begin() + 16);
  put16(out, 10, ip_checksum(out.data(), 20));
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

std::vector<std::uint8_t> outer_prefix(const OuterHeader& o, std::size_t inner_len) {
  // UDP header + VXLAN header, then wrapped in the outer IP header.
  std::vector<std::uint8_t> udp(16, 0);
  put16(udp, 0, o.src_port);
  put16(udp, 2, o.dst_port);
  put16(udp, 4, static_cast<std::uint16_t>(16 + inner_len));
  udp[8] = 0x08;  // VNI valid
  udp[12] = static_cast<std::uint8_t>(o.vni >> 16);
  udp[13] = static_cast<std::uint8_t>(o.vni >> 8);
  udp[14] = static_cast<std::uint8_t>(o.vni);
  auto hdr = ip_packet(o.src, o.dst, 17, udp);
  // ip_packet sized the total length without the inner packet; fix it up.
  put16(hdr, 2, static_cast<std::uint16_t>(hdr.size() + inner_len));
  put16(hdr, 10, 0);
  put16(hdr, 10, ip_checksum(hdr.data(), 20));
  return hdr;
}

void record(std::vector<HopView>* trace, Hop h, const SimPacket& p) {
  if (trace) trace->push_back({h, p.mark, p.encapsulated});
}

std::string flow_label(const std::optional<QosFlowRef>& f) { return f ? to_string(*f) : "default"; }

}  // namespace

std::vector<std::uint8_t> inner_bytes(const SimPacket& p) {
  if (p.encapsulated) return p.payload;
  return ip_packet(p.overlay_src, p.overlay_dst, 17, p.payload);
}

std::vector<std::uint8_t> wire_bytes(const SimPacket& p) {
  if (!p.encapsulated) return inner_bytes(p);
  auto out = outer_prefix(p.outer.value_or(OuterHeader{}), p.payload.size());
  out.insert(out.end(), p.payload.begin(), p.payload.end());
  return out;
}

std::string_view to_string(Hop h) noexcept {
  switch (h) {
    case Hop::pod_eth0: return "pod-eth0";
    case Hop::veth: return "veth";
    case Hop::bridge: return "cni0";
    case Hop::mark_point: return "mangle/PREROUTING";
    case Hop::vxlan: return "flannel.0";
    case Hop::phys_if: return "phys-if";
  }
  return "?";
}

SimPacket encapsulate(SimPacket packet, const OuterHeader& outer) {
  if (packet.encapsulated) return packet;
  packet.payload = inner_bytes(packet);
  packet.encapsulated = true;
  packet.outer = outer;
  return packet;
}

SimPacket traverse(SimPacket packet, const NodePath& path, std::vector<HopView>* trace) {
  for (Hop h : kEgressHops) {
    switch (h) {
      case Hop::mark_point:
        for (const auto& rule : path.rules) {
          if (rule.match_source == packet.overlay_src) {
            packet.mark = (packet.mark & ~rule.set_mark_mask) | (rule.set_mark_value & rule.set_mark_mask);
          }
        }
        break;
      case Hop::vxlan:
        packet = encapsulate(std::move(packet), path.outer);
        break;
      default:
        break;
    }
    record(trace, h, packet);
  }
  return packet;
}

SimPacket traverse_ingress(SimPacket packet, const NodePath& path, std::vector<HopView>* trace) {
  if (!packet.encapsulated) packet = encapsulate(std::move(packet), path.outer);
  for (auto it = kEgressHops.rbegin(); it != kEgressHops.rend(); ++it) {
    if (*it == Hop::mark_point) continue;  // egress only
    if (*it == Hop::vxlan) {
      // Decapsulation: the overlay header fields are already in the packet;
      // the payload goes back to the application bytes.
      packet.payload.erase(packet.payload.begin(), packet.payload.begin() + kInnerHeaderBytes);
      packet.encapsulated = false;
      packet.outer.reset();
    }
    record(trace, *it, packet);
  }
  return packet;
}

EndToEnd end_to_end(const SimPacket& packet, const NodePath& path, EmulatorClient& network, SimTime send_time) {
  EndToEnd out;
  out.at_phys_if = traverse(packet, path);
  TransmitRequest req;
  req.send_time = send_time;
  req.size_bytes = wire_bytes(out.at_phys_if).size();
  req.mark = out.at_phys_if.mark;
  out.delivery = network.transmit(req);
  return out;
}

Delivery end_to_end_ingress(const SimPacket& packet, const NodePath& path, SimTime send_time) {
  auto at_pod = traverse_ingress(packet, path);
  Delivery d;
  d.send_time = send_time;
  d.arrival_time = send_time;
  d.size_bytes = inner_bytes(at_pod).size();
  return d;
}

double PodReport::mean_ms() const {
  if (packets == 0) return 0.0;
  return static_cast<double>(total_latency.count()) / static_cast<double>(packets) / 1e6;
}

ExperimentReport run_priority_experiment(const std::vector<ExperimentPod>& pods, const NodePath& path,
                                         EmulatorClient& network, const Schedule& schedule) {
  ExperimentReport report;
  report.schedule = schedule;
  if (pods.empty() || schedule.packets_per_pod == 0) return report;

  struct Event {
    SimTime send;
    std::size_t pod;
    SimPacket packet;
  };
  std::mt19937_64 rng(schedule.seed);
  const std::int64_t interval_ns = static_cast<std::int64_t>(schedule.interval_us) * 1000;
  std::vector<Event> events;
  events.reserve(pods.size() * schedule.packets_per_pod);
  for (std::size_t p = 0; p < pods.size(); ++p) {
    for (std::size_t i = 0; i < schedule.packets_per_pod; ++i) {
      const std::int64_t jitter = interval_ns > 0 ? static_cast<std::int64_t>(rng() % interval_ns) : 0;
      SimPacket pkt;
      pkt.overlay_src = pods[p].ip;
      pkt.overlay_dst = "10.244.2.1";
      pkt.payload.resize(schedule.payload_bytes);
      for (auto& b : pkt.payload) b = static_cast<std::uint8_t>(rng());
      events.push_back({SimTime(static_cast<std::int64_t>(i) * interval_ns + jitter), p, std::move(pkt)});
    }
  }
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    return a.send != b.send ? a.send < b.send : a.pod < b.pod;
  });

  std::vector<std::vector<SimTime>> latencies(pods.size());
  report.pods.resize(pods.size());
  for (std::size_t p = 0; p < pods.size(); ++p) report.pods[p].pod = pods[p];
  for (const auto& ev : events) {
    auto r = end_to_end(ev.packet, path, network, ev.send);
    if (inner_bytes(r.at_phys_if) != inner_bytes(ev.packet)) ++report.payload_mismatches;
    auto& pr = report.pods[ev.pod];
    ++pr.packets;
    if (r.delivery.flow == pr.pod.expected_flow) ++pr.own_flow;
    ++report.histogram[flow_label(r.delivery.flow)];
    latencies[ev.pod].push_back(r.delivery.latency());
    pr.total_latency += r.delivery.latency();
    if (schedule.keep_packets) {
      pr.records.push_back({ev.send, r.delivery.arrival_time, r.delivery.size_bytes, r.delivery.flow});
    }
  }
  for (std::size_t p = 0; p < pods.size(); ++p) {
    auto& l = latencies[p];
    std::sort(l.begin(), l.end());
    auto& pr = report.pods[p];
    auto rank = [&](double q) {
      auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(l.size())));
      return l[std::max<std::size_t>(k, 1) - 1];
    };
    pr.min_latency = l.front();
    pr.max_latency = l.back();
    pr.p50 = rank(0.50);
    pr.p99 = rank(0.99);
  }
  return report;
}

std::string ExperimentReport::render_text() const {
  std::string out = fmt::format("experiment seed={} packets-per-pod={} payload-bytes={} interval-us={}\n",
                                schedule.seed, schedule.packets_per_pod, schedule.payload_bytes,
                                schedule.interval_us);
  out += fmt::format("{:<12} {:<15} {:<10} {:<18} {:>4} {:>10} {:>10} {:>10} {:>9}\n", "POD", "IP", "MARK", "FLOW",
                     "5QI", "MEAN-MS", "P50-MS", "P99-MS", "OWN-FLOW");
  for (const auto& p : pods) {
    const double own = p.packets ? 100.0 * static_cast<double>(p.own_flow) / static_cast<double>(p.packets) : 0.0;
    out += fmt::format("{:<12} {:<15} {:<10} {:<18} {:>4} {:>10.3f} {:>10} {:>10} {:>8.2f}%\n", p.pod.name, p.pod.ip,
                       p.pod.mark ? textio::hex(p.pod.mark) : "-", flow_label(p.pod.expected_flow),
                       p.pod.five_qi ? std::to_string(p.pod.five_qi) : "-", p.mean_ms(), format_ms(p.p50),
                       format_ms(p.p99), own);
  }
  out += "classification\n";
  for (const auto& [label, n] : histogram) out += fmt::format("  {:<18} {}\n", label, n);
  out += fmt::format("payload-mismatches {}\n", payload_mismatches);
  return out;
}

std::string ExperimentReport::render_machine() const {
  std::string out = "record\tname\tip\tmark\tflow\tfive_qi\tpackets\tmean_ms\tp50_ms\tp99_ms\town_flow\n";
  for (const auto& p : pods) {
    out += fmt::format("pod\t{}\t{}\t{}\t{}\t{}\t{}\t{:.6f}\t{}\t{}\t{}\n", p.pod.name, p.pod.ip,
                       textio::hex(p.pod.mark), flow_label(p.pod.expected_flow), p.pod.five_qi, p.packets,
                       p.mean_ms(), format_ms(p.p50), format_ms(p.p99), p.own_flow);
  }
  for (const auto& [label, n] : histogram) out += fmt::format("class\t{}\t{}\n", label, n);
  out += fmt::format("mismatch\t{}\n", payload_mismatches);
  return out;
}

ExperimentDescription parse_experiment(std::string_view text) {
  ExperimentDescription d;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view raw = text.substr(pos, end - pos);
    pos = end + 1;
    ++lineno;
    auto line = textio::trim(textio::strip_comment(raw));
    if (line.empty()) continue;
    auto words = textio::split_ws(line);
    const std::string& kw = words[0];
    auto fail = [&](const std::string& why) {
      throw Error(Errc::malformed_config, fmt::format("experiment line {}: {}", lineno, why));
    };
    auto number = [&]() -> std::uint64_t {
      if (words.size() != 2) fail(kw + " takes one value");
      auto v = textio::parse_uint(words[1]);
      if (!v) fail("'" + words[1] + "' is not a number");
      return *v;
    };
    if (kw == "seed") {
      d.schedule.seed = number();
    } else if (kw == "packets") {
      d.schedule.packets_per_pod = number();
    } else if (kw == "payload-bytes") {
      d.schedule.payload_bytes = number();
    } else if (kw == "interval-us") {
      d.schedule.interval_us = number();
    } else if (kw == "reserve") {
      d.registry_document += std::string(line.substr(line.find(kw) + kw.size())) + "\n";
    } else if (kw == "profile" || kw == "default") {
      d.profile_document += std::string(line) + "\n";
    } else if (kw == "pod") {
      PodLine pod;
      nlohmann::json req = nlohmann::json::object();
      for (std::size_t i = 1; i < words.size(); ++i) {
        auto eq = words[i].find('=');
        if (eq == std::string::npos) fail("expected key=value, got '" + words[i] + "'");
        std::string key = words[i].substr(0, eq), value = words[i].substr(eq + 1);
        static const std::map<std::string, std::string> kReqKeys{{"latency-ms", "latencyMs"},
                                                                 {"five-qi", "fiveQi"},
                                                                 {"max-kbps", "maxKbps"},
                                                                 {"guaranteed-kbps", "guaranteedKbps"}};
        if (key == "name") {
          pod.name = value;
        } else if (key == "ip") {
          pod.ip = value;
        } else if (key == "priority-class") {
          req["priorityClass"] = value;
        } else if (auto it = kReqKeys.find(key); it != kReqKeys.end()) {
          auto v = textio::parse_uint(value);
          if (!v) fail(key + " needs a number");
          req[it->second] = *v;
        } else {
          fail("unknown pod key '" + key + "'");
        }
      }
      if (pod.name.empty() || pod.ip.empty()) fail("pod needs name= and ip=");
      (void)ipv4(pod.ip);
      for (const auto& other : d.pods) {
        if (other.name == pod.name) fail("duplicate pod name " + pod.name);
      }
      if (!req.empty()) pod.requirement = requirement_from_json(req);
      d.pods.push_back(std::move(pod));
    } else {
      fail("unknown keyword '" + kw + "'");
    }
  }
  return d;
}

ExperimentReport run_experiment(const ExperimentDescription& desc, std::optional<std::uint64_t> seed) {
  Emulator emulator;
  LocalEmulatorClient network(emulator);
  SimBackend backend;
  FwMarkSpace marks(load_registry(desc.registry_document), {});
  ProfileTable profiles = load_profile_table(desc.profile_document.empty() ? default_profile_table_document()
                                                                           : desc.profile_document);
  BindingStore store;
  QosDaemon daemon(marks, profiles, backend, network, store);

  std::vector<ExperimentPod> pods;
  for (const auto& line : desc.pods) {
    ExperimentPod pod{line.name, line.ip, std::nullopt, 0, 0, std::nullopt};
    if (line.requirement) {
      auto b = daemon.handle_add(line.name, line.ip, *line.requirement);
      pod.expected_flow = b.flow();
      pod.mark = b.mark.value();
      pod.five_qi = b.profile.five_qi;
      pod.delay_ms = b.profile.packet_delay_budget_ms;
    }
    pods.push_back(std::move(pod));
  }
  NodePath path;
  path.rules = backend.mark_rules();
  Schedule schedule = desc.schedule;
  if (seed) schedule.seed = *seed;
  return run_priority_experiment(pods, path, network, schedule);
}

}  // namespace qosbridge::overlay
