#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <nlohmann/json.hpp>
#include <set>
#include <random>
#include <thread>

#include "qosbridge/emulator.hpp"
#include "qosbridge/emulator_http.hpp"
#include "qosbridge/error.hpp"
#include "qosbridge/textio.hpp"
#include "support/oracles.hpp"

using namespace qosbridge;
using namespace std::chrono_literals;

namespace {

Errc error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return Errc::bad_request;
}

QosFlowRequest flow_req(const std::string& session, double delay_ms, std::uint32_t five_qi = 80) {
  QosFlowRequest r;
  r.session_id = session;
  r.delay_ms = delay_ms;
  r.five_qi = five_qi;
  return r;
}

// link -> session -> flows of 2/10/50 ms -> one filter each (marks 0x2000,
// 0x4000, 0x6000 under 0xe000). Works through any client.
std::vector<QosFlowRef> build_three_flows(EmulatorClient& c) {
  auto link = c.create_radio_link();
  auto session = c.create_pdu_session(link.id);
  std::vector<QosFlowRef> refs;
  const std::pair<double, std::uint32_t> spec[] = {{2, 81}, {10, 80}, {50, 70}};
  std::uint32_t mark = 0x2000;
  for (auto [delay, qi] : spec) {
    auto f = c.create_qos_flow(flow_req(session.id, delay, qi));
    c.create_filter(mark, 0xE000, f.ref());
    refs.push_back(f.ref());
    mark += 0x2000;
  }
  return refs;
}

std::string golden(const std::string& name) {
  return textio::read_file(std::string(QB_SOURCE_DIR) + "/tests/golden/" + name);
}

}  // namespace

TEST(Emulator, EmptyTreeHasRootAndDefaultOnly) {
  Emulator emu;
  EXPECT_EQ(emu.dump_tree(),
            "qdisc htb 1: root default 1\n"
            "class htb 1:1 parent 1: default delay 0ms rate unlimited\n");
}

TEST(Emulator, ThreeFlowTreeMatchesGolden) {
  Emulator emu;
  LocalEmulatorClient c(emu);
  build_three_flows(c);
  EXPECT_EQ(emu.dump_tree(), golden("three_flow_tree.txt"));

  Emulator again;
  LocalEmulatorClient c2(again);
  build_three_flows(c2);
  EXPECT_EQ(again.dump_tree(), emu.dump_tree());
}

TEST(Emulator, QfiIsLowestUnusedAndDuplicatesConflict) {
  Emulator emu;
  auto s = emu.create_pdu_session(emu.create_radio_link().id);
  EXPECT_EQ(emu.create_qos_flow(flow_req(s.id, 1)).qfi, 1u);
  EXPECT_EQ(emu.create_qos_flow(flow_req(s.id, 1)).qfi, 2u);
  emu.delete_qos_flow({s.id, 1});
  EXPECT_EQ(emu.create_qos_flow(flow_req(s.id, 1)).qfi, 1u);
  auto dup = flow_req(s.id, 1);
  dup.qfi = 2;
  EXPECT_EQ(error_of([&] { emu.create_qos_flow(dup); }), Errc::conflict);
}

TEST(Emulator, ParentsMustExistAndBeUp) {
  Emulator emu;
  EXPECT_EQ(error_of([&] { emu.create_pdu_session("link-9"); }), Errc::not_found);
  EXPECT_EQ(error_of([&] { emu.create_qos_flow(flow_req("session-9", 1)); }), Errc::not_found);
  EXPECT_EQ(error_of([&] { emu.create_filter(0x2000, 0xE000, {"session-9", 1}); }), Errc::not_found);
  auto link = emu.create_radio_link();
  emu.set_radio_link_state(link.id, false);
  EXPECT_EQ(error_of([&] { emu.create_pdu_session(link.id); }), Errc::dependency_violation);
}

TEST(Emulator, FilterValidation) {
  Emulator emu;
  auto s = emu.create_pdu_session(emu.create_radio_link().id);
  auto f = emu.create_qos_flow(flow_req(s.id, 1));
  EXPECT_EQ(error_of([&] { emu.create_filter(0x2080, 0xE000, f.ref()); }), Errc::bad_request);
  EXPECT_EQ(error_of([&] { emu.create_filter(0, 0xE000, f.ref()); }), Errc::bad_request);
  emu.create_filter(0x2000, 0xE000, f.ref());
  EXPECT_EQ(error_of([&] { emu.create_filter(0x2000, 0xE000, f.ref()); }), Errc::conflict);
}

TEST(Emulator, DeletesRespectDependentsAndFlags) {
  Emulator emu;
  LocalEmulatorClient c(emu);
  auto refs = build_three_flows(c);
  EXPECT_EQ(error_of([&] { emu.delete_pdu_session("session-1"); }), Errc::dependency_violation);
  EXPECT_EQ(error_of([&] { emu.delete_radio_link("link-1"); }), Errc::dependency_violation);
  EXPECT_EQ(error_of([&] { emu.delete_qos_flow(refs[0]); }), Errc::dependency_violation);
  EXPECT_EQ(error_of([&] { emu.delete_filter("filter-77"); }), Errc::not_found);
  emu.delete_filter("filter-77", {false, true});
  emu.delete_qos_flow(refs[0], {true, false});
  EXPECT_TRUE(emu.classify(0x2000).is_default());
  emu.delete_radio_link("link-1", {true, false});
  EXPECT_EQ(emu.dump_tree(), Emulator().dump_tree());
  EXPECT_TRUE(emu.pdu_sessions().empty());
}

TEST(Classify, ExamplesAndMaskDiscipline) {
  Emulator emu;
  LocalEmulatorClient c(emu);
  auto refs = build_three_flows(c);
  EXPECT_EQ(emu.classify(0x2000).flow, refs[0]);
  EXPECT_TRUE(emu.classify(0).is_default());
  EXPECT_EQ(emu.classify(0x2080).flow, refs[0]);
  EXPECT_EQ(emu.classify(0xFFFF3FFF).flow, refs[0]);  // every reserved bit set
  EXPECT_TRUE(emu.classify(0xE000).is_default());
}

TEST(Classify, DeletedFilterFallsBackToDefault) {
  Emulator emu;
  auto s = emu.create_pdu_session(emu.create_radio_link().id);
  auto f = emu.create_qos_flow(flow_req(s.id, 10));
  auto filt = emu.create_filter(0x2000, 0xE000, f.ref());
  EXPECT_FALSE(emu.classify(0x2000).is_default());
  emu.delete_filter(filt.id);
  EXPECT_TRUE(emu.classify(0x2000).is_default());
}

TEST(Classify, AgreesWithLinearScanAndPartitions) {
  std::mt19937_64 rng(17);
  for (int round = 0; round < 100; ++round) {
    Emulator emu;
    auto s = emu.create_pdu_session(emu.create_radio_link().id);
    const std::uint32_t mask = static_cast<std::uint32_t>(rng()) | 0x10000;
    std::vector<oracle::FilterRow> rows;
    std::set<std::uint32_t> used;
    for (int i = 0; i < 12; ++i) {
      const auto mark = static_cast<std::uint32_t>(rng()) & mask;
      if (mark == 0 || !used.insert(mark).second) continue;
      auto f = emu.create_qos_flow(flow_req(s.id, static_cast<double>(i)));
      emu.create_filter(mark, mask, f.ref());
      rows.push_back({mark, mask, f.ref()});
    }
    for (int probe = 0; probe < 500; ++probe) {
      std::uint32_t mark = static_cast<std::uint32_t>(rng());
      if (probe % 2 && !rows.empty()) mark = rows[rng() % rows.size()].mark | (mark & ~mask);
      const auto got = emu.classify(mark).flow;
      EXPECT_EQ(got, oracle::classify_linear(rows, mark));
      EXPECT_EQ(emu.classify(mark).flow, got);  // pure
      int matches = 0;
      for (const auto& r : rows) matches += (mark & r.mask) == r.mark;
      EXPECT_LE(matches, 1);
    }
  }
}

TEST(Transmit, DelayOnlyFlows) {
  Emulator emu;
  LocalEmulatorClient c(emu);
  auto refs = build_three_flows(c);
  TransmitRequest r;
  r.size_bytes = 100;
  r.flow = refs[1];
  auto d = emu.transmit(r);
  EXPECT_EQ(d.arrival_time, 10ms);
  TransmitRequest by_mark;
  by_mark.size_bytes = 100;
  by_mark.mark = 0x6000;
  by_mark.send_time = 5ms;
  EXPECT_EQ(emu.transmit(by_mark).latency(), 50ms);
  TransmitRequest unmatched;
  unmatched.mark = 0;
  unmatched.send_time = 3ms;
  auto dd = emu.transmit(unmatched);
  EXPECT_FALSE(dd.flow);
  EXPECT_EQ(dd.arrival_time, 3ms);
  TransmitRequest missing;
  missing.flow = QosFlowRef{"session-1", 9};
  EXPECT_EQ(error_of([&] { emu.transmit(missing); }), Errc::not_found);
}

TEST(Transmit, BackToBackPacketsThroughRateLimitedFlow) {
  Emulator emu;
  auto s = emu.create_pdu_session(emu.create_radio_link().id);
  auto req = flow_req(s.id, 0);
  req.rate_kbps = 1000;
  auto f = emu.create_qos_flow(req);
  oracle::TokenBucket bucket(1000, kDefaultAveragingWindowMs);
  for (int i = 0; i < 10; ++i) {
    TransmitRequest t;
    t.flow = f.ref();
    t.size_bytes = 1250;  // 10 ms worth at 1000 kbit/s
    auto d = emu.transmit(t);
    EXPECT_EQ(d.arrival_time, SimTime(10ms) * (i + 1));
    EXPECT_NEAR(static_cast<double>(d.arrival_time.count()), bucket.depart(0.0, 1250) * 1e9, 1.0);
  }
}

TEST(Transmit, TokenBucketAgreesWithOracle) {
  std::mt19937_64 rng(99);
  for (int round = 0; round < 30; ++round) {
    Emulator emu;
    auto s = emu.create_pdu_session(emu.create_radio_link().id);
    auto req = flow_req(s.id, static_cast<double>(rng() % 20));
    req.rate_kbps = 100 + rng() % 5000;
    req.averaging_window_ms = 1 + static_cast<std::uint32_t>(rng() % 100);
    auto f = emu.create_qos_flow(req);
    oracle::TokenBucket bucket(static_cast<double>(*req.rate_kbps), *req.averaging_window_ms);
    const double delay_s = req.delay_ms / 1e3;
    std::int64_t t = 0;
    SimTime prev_arrival{0};
    for (int i = 0; i < 400; ++i) {
      t += static_cast<std::int64_t>(rng() % 3'000'000);
      TransmitRequest tr;
      tr.flow = f.ref();
      tr.send_time = SimTime(t);
      tr.size_bytes = 40 + rng() % 1500;
      auto d = emu.transmit(tr);
      const double expect_ns = (bucket.depart(static_cast<double>(t) / 1e9, tr.size_bytes) + delay_s) * 1e9;
      ASSERT_NEAR(static_cast<double>(d.arrival_time.count()), expect_ns, 1000.0) << "round " << round << " pkt " << i;
      EXPECT_GE(d.latency(), f.delay);  // delay additivity
      EXPECT_GE(d.arrival_time, prev_arrival);  // FIFO
      prev_arrival = d.arrival_time;
    }
  }
}

TEST(Transmit, UnlimitedFlowAddsExactlyItsDelay) {
  Emulator emu;
  auto s = emu.create_pdu_session(emu.create_radio_link().id);
  auto f = emu.create_qos_flow(flow_req(s.id, 7.5));
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    TransmitRequest tr;
    tr.flow = f.ref();
    tr.send_time = SimTime(static_cast<std::int64_t>(i) * 1'000'000 + static_cast<std::int64_t>(rng() % 1'000'000));
    tr.size_bytes = 1 + rng() % 9000;
    EXPECT_EQ(emu.transmit(tr).latency(), 7500us);
  }
}

TEST(Json, RoundTrips) {
  QosFlowRequest r = flow_req("session-3", 12.5, 7);
  r.rate_kbps = 64;
  r.averaging_window_ms = 100;
  r.qfi = 4;
  auto back = qos_flow_request_from_json(to_json(r));
  EXPECT_EQ(back.session_id, r.session_id);
  EXPECT_EQ(back.delay_ms, r.delay_ms);
  EXPECT_EQ(back.rate_kbps, r.rate_kbps);
  EXPECT_EQ(back.averaging_window_ms, r.averaging_window_ms);
  EXPECT_EQ(back.qfi, r.qfi);
  MarkFilter f{"filter-2", 0x4000, 0xE000, {"session-1", 2}};
  auto fb = mark_filter_from_json(to_json(f));
  EXPECT_EQ(fb.id, f.id);
  EXPECT_EQ(fb.match_mark, f.match_mark);
  EXPECT_EQ(fb.match_mask, f.match_mask);
  EXPECT_EQ(fb.target, f.target);
}

TEST(Amf, EverythingIsNotImplemented) {
  AmfClient amf;
  EXPECT_EQ(error_of([&] { amf.create_radio_link(); }), Errc::not_implemented);
  EXPECT_EQ(error_of([&] { amf.dump_tree(); }), Errc::not_implemented);
}

class Rest : public ::testing::Test {
 protected:
  void SetUp() override {
    port_ = server_.start("127.0.0.1", 0);
    client_ = std::make_unique<HttpEmulatorClient>("http://127.0.0.1:" + std::to_string(port_));
  }
  void TearDown() override { server_.stop(); }

  Emulator emu_;
  EmulatorServer server_{emu_};
  int port_ = 0;
  std::unique_ptr<HttpEmulatorClient> client_;
};

TEST_F(Rest, HealthAndGoldenTree) {
  EXPECT_TRUE(client_->healthy());
  build_three_flows(*client_);
  EXPECT_EQ(client_->dump_tree(), golden("three_flow_tree.txt"));
  EXPECT_EQ(client_->dump_tree(), emu_.dump_tree());
}

TEST_F(Rest, CreateDeleteRoundTripRestoresTree) {
  auto link = client_->create_radio_link();
  auto session = client_->create_pdu_session(link.id);
  const auto before = client_->dump_tree();
  auto req = flow_req(session.id, 10);
  req.rate_kbps = 2000;
  auto flow = client_->create_qos_flow(req);
  EXPECT_EQ(flow.rate_kbps, 2000u);
  EXPECT_EQ(flow.delay, 10ms);
  auto filt = client_->create_filter(0x2000, 0xE000, flow.ref());
  EXPECT_NE(client_->dump_tree(), before);
  client_->delete_filter(filt.id, {});
  client_->delete_qos_flow(flow.ref(), {});
  EXPECT_EQ(client_->dump_tree(), before);
  client_->delete_pdu_session(session.id, {});
  client_->delete_radio_link(link.id, {});
  EXPECT_TRUE(client_->radio_links().empty());
}

TEST_F(Rest, ErrorsKeepTheirCodes) {
  EXPECT_EQ(error_of([&] { client_->delete_filter("filter-1", {}); }), Errc::not_found);
  client_->delete_filter("filter-1", {false, true});
  auto link = client_->create_radio_link();
  auto s = client_->create_pdu_session(link.id);
  auto f = client_->create_qos_flow(flow_req(s.id, 1));
  auto dup = flow_req(s.id, 1);
  dup.qfi = f.qfi;
  EXPECT_EQ(error_of([&] { client_->create_qos_flow(dup); }), Errc::conflict);
  EXPECT_EQ(error_of([&] { client_->delete_radio_link(link.id, {}); }), Errc::dependency_violation);
  EXPECT_EQ(error_of([&] { client_->create_filter(0x3, 0x1, f.ref()); }), Errc::bad_request);
}

TEST_F(Rest, ListingsClassifyAndTransmit) {
  auto refs = build_three_flows(*client_);
  EXPECT_EQ(client_->radio_links().size(), 1u);
  ASSERT_EQ(client_->pdu_sessions().size(), 1u);
  EXPECT_EQ(client_->pdu_sessions()[0].qfis, (std::vector<std::uint32_t>{1, 2, 3}));
  EXPECT_EQ(client_->qos_flows().size(), 3u);
  EXPECT_EQ(client_->filters().size(), 3u);
  EXPECT_EQ(client_->classify(0x4000).flow, refs[1]);
  EXPECT_TRUE(client_->classify(0x1).is_default());
  TransmitRequest t;
  t.mark = 0x2080;
  t.size_bytes = 100;
  t.send_time = 1ms;
  auto d = client_->transmit(t);
  EXPECT_EQ(d.flow, refs[0]);
  EXPECT_EQ(d.arrival_time, 3ms);
}

TEST(RestClient, UnreachableServer) {
  HttpEmulatorClient c("http://127.0.0.1:1");
  EXPECT_FALSE(c.healthy());
  EXPECT_EQ(error_of([&] { c.dump_tree(); }), Errc::emulator_unreachable);
}
