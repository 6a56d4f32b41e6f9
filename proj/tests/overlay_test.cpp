#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "qosbridge/error.hpp"
#include "qosbridge/overlay.hpp"
#include "qosbridge/textio.hpp"
#include "support/node.hpp"
#include "support/oracles.hpp"

using namespace qosbridge;
using namespace qosbridge::overlay;
using namespace std::chrono_literals;
using testing_support::latency;
using testing_support::Node;

namespace {

MarkRuleSpec rule(const std::string& src, std::uint32_t value, std::uint32_t mask = 0xE000) {
  MarkRuleSpec r;
  r.match_source = src;
  r.set_mark_value = value;
  r.set_mark_mask = mask;
  return r;
}

SimPacket packet(const std::string& src, std::size_t n = 64, std::uint32_t seed = 1) {
  SimPacket p;
  p.overlay_src = src;
  p.overlay_dst = "10.244.2.9";
  std::mt19937 rng(seed);
  for (std::size_t i = 0; i < n; ++i) p.payload.push_back(static_cast<std::uint8_t>(rng()));
  return p;
}

std::string scenario(const std::string& name) {
  return textio::read_file(std::string(QB_SOURCE_DIR) + "/share/scenarios/" + name);
}

Errc parse_error(const std::string& text) {
  try {
    parse_experiment(text);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "parsed: " << text;
  return Errc::bad_request;
}

}  // namespace

TEST(Traverse, MatchingRuleSetsMark) {
  NodePath path{{rule("10.244.1.5", 0x2000)}, {}};
  EXPECT_EQ(traverse(packet("10.244.1.5"), path).mark, 0x2000u);
  EXPECT_EQ(traverse(packet("10.244.1.6"), path).mark, 0u);
  auto pre = packet("10.244.1.5");
  pre.mark = 0x0080;  // someone else's bit
  EXPECT_EQ(traverse(pre, path).mark, 0x2080u);
  pre.mark = 0xE080;
  EXPECT_EQ(traverse(pre, path).mark, 0x2080u);
}

TEST(Traverse, EncapsulatesAtVxlanAndMarkIsVisibleFromMarkPointOn) {
  NodePath path{{rule("10.244.1.5", 0x4000)}, {}};
  std::vector<HopView> trace;
  auto out = traverse(packet("10.244.1.5"), path, &trace);
  ASSERT_EQ(trace.size(), kEgressHops.size());
  for (std::size_t i = 0; i < trace.size(); ++i) {
    EXPECT_EQ(trace[i].hop, kEgressHops[i]);
    const bool after_mark = i >= 3;
    EXPECT_EQ(trace[i].mark, after_mark ? 0x4000u : 0u) << to_string(trace[i].hop);
    EXPECT_EQ(trace[i].encapsulated, i >= 4) << to_string(trace[i].hop);
  }
  EXPECT_TRUE(out.encapsulated);
  EXPECT_EQ(to_string(Hop::mark_point), "mangle/PREROUTING");
  EXPECT_EQ(to_string(Hop::vxlan), "flannel.0");
}

TEST(Traverse, WireSizes) {
  auto p = packet("10.244.1.5", 100);
  EXPECT_EQ(wire_bytes(p).size(), 100 + kInnerHeaderBytes);
  auto out = traverse(p, {});
  EXPECT_EQ(wire_bytes(out).size(), 100 + kInnerHeaderBytes + kOuterHeaderBytes);
  EXPECT_EQ(inner_bytes(out), wire_bytes(p));
}

TEST(Traverse, MarkNeverReachesTheWire) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 2000; ++i) {
    auto p = packet("10.244.1." + std::to_string(1 + rng() % 8), rng() % 1500, static_cast<std::uint32_t>(rng()));
    NodePath path;
    for (int r = 0; r < 4; ++r) {
      path.rules.push_back(rule("10.244.1." + std::to_string(1 + rng() % 8), static_cast<std::uint32_t>(rng()),
                                static_cast<std::uint32_t>(rng())));
    }
    const auto before = wire_bytes(p);
    auto marked = traverse(p, path);
    auto unmarked = traverse(p, NodePath{{}, path.outer});
    EXPECT_EQ(inner_bytes(marked), before);
    EXPECT_EQ(wire_bytes(marked), wire_bytes(unmarked));
  }
}

TEST(Traverse, IngressSkipsTheMarkPoint) {
  NodePath path{{rule("10.244.2.9", 0x2000)}, {}};
  auto arriving = encapsulate(packet("10.244.2.9"), path.outer);
  std::vector<HopView> trace;
  auto out = traverse_ingress(arriving, path, &trace);
  EXPECT_EQ(out.mark, 0u);
  EXPECT_FALSE(out.encapsulated);
  EXPECT_EQ(trace.size(), kEgressHops.size() - 1);
  for (const auto& h : trace) EXPECT_NE(h.hop, Hop::mark_point);
  EXPECT_EQ(out.payload, packet("10.244.2.9").payload);
  EXPECT_EQ(end_to_end_ingress(arriving, path, 4ms).arrival_time, 4ms);
}

TEST(EndToEnd, PodTrafficReachesItsFlow) {
  Node node(testing_support::kCiliumRegistry);
  auto b = node.daemon->handle_add("c1", "10.244.1.5", latency(10));
  NodePath path{node.backend.mark_rules(), {}};
  auto r = end_to_end(packet("10.244.1.5"), path, node.network, 1ms);
  EXPECT_EQ(r.at_phys_if.mark, b.mark.value());
  EXPECT_EQ(r.delivery.flow, b.flow());
  EXPECT_EQ(r.delivery.arrival_time, 11ms);
  auto other = end_to_end(packet("10.244.1.99"), path, node.network, 1ms);
  EXPECT_FALSE(other.delivery.flow);
  EXPECT_EQ(other.delivery.arrival_time, 1ms);
}

TEST(EndToEnd, EveryInterleavingOfThreePodsClassifiesCorrectly) {
  Node node(testing_support::kCiliumRegistry);
  const std::vector<std::string> ips{"10.244.1.5", "10.244.1.6", "10.244.1.7"};
  const std::vector<std::uint32_t> lat{10, 50, 300};
  std::vector<FlowBinding> bs;
  for (int i = 0; i < 3; ++i) bs.push_back(node.daemon->handle_add("p" + std::to_string(i), ips[i], latency(lat[i])));
  NodePath path{node.backend.mark_rules(), {}};

  std::vector<int> order{0, 0, 1, 1, 2, 2};
  int count = 0;
  do {
    ++count;
    for (std::size_t k = 0; k < order.size(); ++k) {
      const int pod = order[k];
      // each permutation gets its own second of virtual time; flows are FIFO
      const SimTime t = std::chrono::seconds(count) + SimTime{static_cast<std::int64_t>(k) * 1000};
      auto r = end_to_end(packet(ips[pod], 80, static_cast<std::uint32_t>(k)), path, node.network, t);
      ASSERT_EQ(r.delivery.flow, bs[pod].flow());
      ASSERT_EQ(r.delivery.latency(), std::chrono::milliseconds(lat[pod]));
    }
  } while (std::next_permutation(order.begin(), order.end()));
  EXPECT_EQ(count, 90);
}

TEST(Experiment, ThreeFlowsGetTheirExactDelays) {
  auto report = run_experiment(parse_experiment(scenario("three-flow.exp")));
  ASSERT_EQ(report.pods.size(), 3u);
  const std::int64_t want_ms[] = {2, 10, 50};
  for (int i = 0; i < 3; ++i) {
    const auto& p = report.pods[i];
    EXPECT_EQ(p.packets, 1000u);
    EXPECT_EQ(p.own_flow, p.packets);
    EXPECT_EQ(p.total_latency, std::chrono::milliseconds(want_ms[i]) * 1000);
    EXPECT_EQ(p.min_latency, p.max_latency);
    EXPECT_EQ(p.mean_ms(), static_cast<double>(want_ms[i]));
  }
  EXPECT_EQ(report.payload_mismatches, 0u);
  EXPECT_EQ(report.histogram.size(), 3u);
}

TEST(Experiment, LimitedMinusUnlimitedIsTenMilliseconds) {
  auto report = run_experiment(parse_experiment(scenario("qos-limited.exp")));
  ASSERT_EQ(report.pods.size(), 2u);
  EXPECT_FALSE(report.pods[0].pod.expected_flow);
  EXPECT_EQ(report.pods[0].total_latency, SimTime{0});
  EXPECT_EQ(report.pods[1].total_latency - report.pods[0].total_latency, 10ms * 1000);
  EXPECT_EQ(report.pods[1].mean_ms() - report.pods[0].mean_ms(), 10.0);
}

TEST(Experiment, RateLimitedQueueingMatchesTokenBucketOracle) {
  auto desc = parse_experiment(scenario("rate-limited.exp"));
  desc.schedule.keep_packets = true;
  auto report = run_experiment(desc);
  ASSERT_EQ(report.pods.size(), 1u);
  const auto& pod = report.pods[0];
  ASSERT_EQ(pod.records.size(), 400u);
  auto recs = pod.records;
  std::stable_sort(recs.begin(), recs.end(), [](const auto& a, const auto& b) { return a.send_time < b.send_time; });
  oracle::TokenBucket bucket(1000, kDefaultAveragingWindowMs);
  double worst = 0;
  for (const auto& r : recs) {
    EXPECT_EQ(r.size_bytes, 1250u);
    const double want = bucket.depart(static_cast<double>(r.send_time.count()) / 1e9, r.size_bytes) + 0.010;
    worst = std::max(worst, std::abs(static_cast<double>(r.arrival_time.count()) - want * 1e9));
  }
  EXPECT_LE(worst, 1000.0);  // ns
  EXPECT_GT(pod.max_latency, 100ms);  // the queue did build up
}

TEST(Experiment, SeedDeterminismAndZeroPackets) {
  auto desc = parse_experiment(scenario("three-flow.exp"));
  EXPECT_EQ(run_experiment(desc, 3).render_machine(), run_experiment(desc, 3).render_machine());
  desc.schedule.packets_per_pod = 0;
  auto empty = run_experiment(desc);
  for (const auto& p : empty.pods) {
    EXPECT_EQ(p.packets, 0u);
    EXPECT_EQ(p.mean_ms(), 0.0);
  }
  EXPECT_FALSE(empty.render_text().empty());
}

TEST(Experiment, ParseErrors) {
  EXPECT_EQ(parse_error("packets many\n"), Errc::malformed_config);
  EXPECT_EQ(parse_error("pod ip=10.0.0.1\n"), Errc::malformed_config);
  EXPECT_EQ(parse_error("pod name=a ip=10.0.0.1 latency-ms=0\n"), Errc::malformed_config);
  EXPECT_EQ(parse_error("pod name=a ip=10.0.0.1 color=blue\n"), Errc::malformed_config);
  EXPECT_EQ(parse_error("teleport now\n"), Errc::malformed_config);
  EXPECT_EQ(parse_error("pod name=a ip=10.0.0.1\npod name=a ip=10.0.0.2\n"), Errc::malformed_config);
}

TEST(Experiment, FullRegistryCannotBindAnyPod) {
  const std::string text = "reserve Cilium 0xFFFF1FFF\nreserve Kubernetes 0x0000C000\nreserve Portmap 0x00002000\n"
                           "pod name=a ip=10.244.1.5 latency-ms=10\n";
  try {
    run_experiment(parse_experiment(text));
    FAIL() << "experiment ran";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::allocation_exhausted);
  }
}
