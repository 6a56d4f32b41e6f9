#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qosbridge/emulator.hpp"
#include "qosbridge/enforcement.hpp"
#include "qosbridge/qos.hpp"

namespace qosbridge::overlay {

// Outer UDP/VXLAN fields. Constant for the whole simulation.
struct OuterHeader {
  std::string src = "192.168.0.10";
  std::string dst = "192.168.0.20";
  std::uint16_t src_port = 40000;
  std::uint16_t dst_port = 4789;
  std::uint32_t vni = 1;
};

// 20-byte IPv4 header in front of the payload; mark never serialized.
inline constexpr std::size_t kInnerHeaderBytes = 20;
// Outer IPv4 (20) + UDP (8) + VXLAN (8).
inline constexpr std::size_t kOuterHeaderBytes = 36;

struct SimPacket {
  std::vector<std::uint8_t> payload;
  std::string overlay_src;  // dotted IPv4
  std::string overlay_dst;
  std::uint32_t mark = 0;  // kernel metadata
  bool encapsulated = false;
  std::optional<OuterHeader> outer;
};

// Wire bytes of the packet as it stands. Unencapsulated: inner header +
// payload. Encapsulated: outer header + payload (which then holds the whole
// inner packet).
std::vector<std::uint8_t> wire_bytes(const SimPacket& p);

// The overlay packet bytes: for an encapsulated packet, the region inside the
// outer header.
std::vector<std::uint8_t> inner_bytes(const SimPacket& p);

enum class Hop { pod_eth0, veth, bridge, mark_point, vxlan, phys_if };

inline constexpr std::array<Hop, 6> kEgressHops = {Hop::pod_eth0, Hop::veth, Hop::bridge,
                                                   Hop::mark_point, Hop::vxlan, Hop::phys_if};

std::string_view to_string(Hop h) noexcept;  // "pod-eth0", "veth", "cni0", "mangle/PREROUTING", "flannel.0", "phys-if"

struct HopView {
  Hop hop;
  std::uint32_t mark;
  bool encapsulated;
};

struct NodePath {
  std::vector<MarkRuleSpec> rules;  // evaluated in order at the mark point; every match applies
  OuterHeader outer;
};

// Egress through every hop. Each matching rule writes only its mask bits.
// `trace` gets one entry per hop when given.
SimPacket traverse(SimPacket packet, const NodePath& path, std::vector<HopView>* trace = nullptr);

// Reverse direction: an encapsulated packet arriving at phys-if toward a pod.
// Decapsulated on flannel.0, bridged to the pod; no mark point on the way.
SimPacket traverse_ingress(SimPacket packet, const NodePath& path, std::vector<HopView>* trace = nullptr);

// Wraps a packet as a remote node would have sent it.
SimPacket encapsulate(SimPacket packet, const OuterHeader& outer);

struct EndToEnd {
  SimPacket at_phys_if;
  Delivery delivery;
};

// traverse, then hand the packet to the network, which classifies by mark.
EndToEnd end_to_end(const SimPacket& packet, const NodePath& path, EmulatorClient& network, SimTime send_time);

// Ingress never passes the uplink flow classes.
Delivery end_to_end_ingress(const SimPacket& packet, const NodePath& path, SimTime send_time);

// Experiment

struct ExperimentPod {
  std::string name;
  std::string ip;
  std::optional<QosFlowRef> expected_flow;  // the pod's binding, if any
  std::uint32_t mark = 0;                   // 0 when unbound
  std::uint32_t five_qi = 0;
  std::optional<std::uint32_t> delay_ms;
};

struct Schedule {
  std::size_t packets_per_pod = 1000;
  std::size_t payload_bytes = 100;
  std::uint64_t interval_us = 1000;  // mean gap between one pod's packets
  std::uint64_t seed = 1;
  bool keep_packets = false;
};

struct PacketRecord {
  SimTime send_time{0};
  SimTime arrival_time{0};
  std::size_t size_bytes = 0;
  std::optional<QosFlowRef> flow;
};

struct PodReport {
  ExperimentPod pod;
  std::size_t packets = 0;
  std::size_t own_flow = 0;  // packets delivered through expected_flow (or default when unbound)
  SimTime total_latency{0};
  SimTime min_latency{0};
  SimTime max_latency{0};
  SimTime p50{0};
  SimTime p99{0};
  std::vector<PacketRecord> records;  // only with Schedule::keep_packets

  double mean_ms() const;
};

struct ExperimentReport {
  Schedule schedule;
  std::vector<PodReport> pods;
  std::map<std::string, std::size_t> histogram;  // "session-1/qfi=1" or "default" -> packets
  std::size_t payload_mismatches = 0;            // inner bytes changed by the path

  std::string render_text() const;
  std::string render_machine() const;  // tab separated, header line first
};

// Packet i of a pod leaves at i*interval + jitter, jitter drawn from a
// seeded mt19937_64 in [0, interval). All pods share one virtual clock.
ExperimentReport run_priority_experiment(const std::vector<ExperimentPod>& pods, const NodePath& path,
                                         EmulatorClient& network, const Schedule& schedule);

// Experiment description file:
//
//   # comment
//   seed 7
//   packets 1000
//   payload-bytes 100
//   interval-us 1000
//   reserve Cilium 0xFFFF1FFF                 (fwmark registry; none = all 32 bits free)
//   profile five-qi=81 type=non-GBR priority=10 delay-ms=2 per=1e-6
//   default 9                                 (profile lines as in a profile table;
//                                              none = built-in table)
//   pod name=pod-a ip=10.244.1.5 latency-ms=2 [five-qi=N] [max-kbps=N]
//       [guaranteed-kbps=N] [priority-class=C]
//
// A pod line without QoS keys stays unbound and uses the default class.
struct PodLine {
  std::string name;
  std::string ip;
  std::optional<QosRequirement> requirement;
};

struct ExperimentDescription {
  Schedule schedule;
  std::string registry_document;
  std::string profile_document;  // empty = built-in table
  std::vector<PodLine> pods;
};

ExperimentDescription parse_experiment(std::string_view text);

// Builds a fresh emulator, allocator and daemon, binds every pod with a
// requirement through the daemon, then runs the experiment. `seed` overrides
// the file's seed when set.
ExperimentReport run_experiment(const ExperimentDescription& desc, std::optional<std::uint64_t> seed = std::nullopt);

}  // namespace qosbridge::overlay
