#include <gtest/gtest.h>

#include <sstream>

#include "qosbridge/daemon_api.hpp"
#include "qosbridge/emulator_http.hpp"
#include "qosbridge/fwmark.hpp"
#include "qosbridge/qos.hpp"
#include "qosbridge/qosctl.hpp"
#include "qosbridge/textio.hpp"
#include "support/node.hpp"

using namespace qosbridge;
using testing_support::latency;
using testing_support::Node;
using testing_support::TempDir;

namespace {

struct Run {
  int rc;
  std::string out, err;
};

Run qosctl(std::vector<std::string> args) {
  args.insert(args.begin(), "qosctl");
  std::ostringstream out, err;
  int rc = run_qosctl(args, out, err);
  return {rc, out.str(), err.str()};
}

std::string src(const std::string& rel) { return std::string(QB_SOURCE_DIR) + "/" + rel; }

}  // namespace

TEST(BitRanges, Examples) {
  EXPECT_EQ(bit_ranges(0xFFFF1FFF), "0-12,16-31");
  EXPECT_EQ(bit_ranges(0x0000E000), "13-15");
  EXPECT_EQ(bit_ranges(0x80), "7");
  EXPECT_EQ(bit_ranges(0x5), "0,2");
  EXPECT_EQ(bit_ranges(0), "-");
  EXPECT_EQ(bit_ranges(0xFFFFFFFF), "0-31");
}

TEST(Audit, CiliumOnlyHasThreeFreeBits) {
  auto r = qosctl({"fwmark-audit", src("share/fwmark-registry-cilium.conf")});
  EXPECT_EQ(r.rc, kExitOk);
  EXPECT_NE(r.out.find("free mask     0x0000e000  bits 13-15\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("3 free bits, capacity 7 marks\n"), std::string::npos) << r.out;

  auto m = qosctl({"--machine", "fwmark-audit", src("share/fwmark-registry-cilium.conf")});
  EXPECT_NE(m.out.find("free\t-\t0x0000e000\t13-15\n"), std::string::npos) << m.out;
  EXPECT_NE(m.out.find("capacity\t-\t3\t7\n"), std::string::npos) << m.out;
}

TEST(Audit, BuiltInTableIsFull) {
  auto r = qosctl({"fwmark-audit"});
  EXPECT_EQ(r.rc, kExitOk);
  EXPECT_NE(r.out.find("registry built-in\n"), std::string::npos);
  EXPECT_NE(r.out.find("0 free bits, capacity 0 marks\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("overlap at bit"), std::string::npos);
  auto file = qosctl({"fwmark-audit", src("share/fwmark-registry.conf")}).out;
  EXPECT_EQ(file.substr(file.find('\n')), r.out.substr(r.out.find('\n')));
}

TEST(Audit, BadInputs) {
  EXPECT_EQ(qosctl({"fwmark-audit", "/nonexistent/registry.conf"}).rc, kExitUsage);
  TempDir dir;
  textio::atomic_write_file(dir / "bad.conf", "Foo 0xZZ\n");
  auto r = qosctl({"fwmark-audit", (dir / "bad.conf").string()});
  EXPECT_EQ(r.rc, kExitBadInput);
  EXPECT_NE(r.err.find("malformed-mask"), std::string::npos) << r.err;
}

TEST(Bindings, EmptyAndOneRowThroughTheSocket) {
  TempDir dir;
  Node node;
  DaemonSocketServer server(*node.daemon, dir / "qosd.sock");
  server.start();
  const std::string sock = (dir / "qosd.sock").string();
  auto empty = qosctl({"--daemon-socket", sock, "--machine", "bindings"});
  EXPECT_EQ(empty.rc, kExitOk);
  EXPECT_EQ(std::count(empty.out.begin(), empty.out.end(), '\n'), 1);  // header only

  node.daemon->handle_add("pod-a", "10.244.1.5", latency(10));
  auto one = qosctl({"--daemon-socket", sock, "--machine", "bindings"});
  EXPECT_EQ(one.rc, kExitOk);
  EXPECT_EQ(std::count(one.out.begin(), one.out.end(), '\n'), 2);
  EXPECT_NE(one.out.find("pod-a"), std::string::npos);
  EXPECT_NE(one.out.find("10.244.1.5"), std::string::npos);
  auto human = qosctl({"--daemon-socket", sock, "bindings"});
  EXPECT_NE(human.out.find("session-1/qfi=1"), std::string::npos) << human.out;
  server.stop();
}

TEST(Bindings, RowsAreSortedByContainer) {
  Node node;
  node.daemon->handle_add("zeta", "10.244.1.9", latency(10));
  node.daemon->handle_add("alpha", "10.244.1.8", latency(10));
  auto text = render_bindings(node.daemon->bindings(), true);
  EXPECT_LT(text.find("alpha"), text.find("zeta"));
}

TEST(Bindings, DaemonDown) {
  TempDir dir;
  auto r = qosctl({"--daemon-socket", (dir / "none.sock").string(), "bindings"});
  EXPECT_EQ(r.rc, kExitDaemonUnreachable);
  EXPECT_NE(r.err.find("daemon-unreachable"), std::string::npos);
}

TEST(Tree, FromARunningEmulator) {
  Emulator emu;
  EmulatorServer server(emu);
  const int port = server.start("127.0.0.1", 0);
  auto r = qosctl({"--emulator-url", "http://127.0.0.1:" + std::to_string(port), "tree"});
  EXPECT_EQ(r.rc, kExitOk);
  EXPECT_EQ(r.out, emu.dump_tree());
  server.stop();
  EXPECT_EQ(qosctl({"--emulator-url", "http://127.0.0.1:1", "tree"}).rc, kExitEmulatorUnreachable);
}

TEST(Experiment, BundledScenarios) {
  auto r = qosctl({"experiment", src("share/scenarios/three-flow.exp")});
  EXPECT_EQ(r.rc, kExitOk) << r.err;
  EXPECT_NE(r.out.find("payload-mismatches 0"), std::string::npos);
  auto m = qosctl({"--machine", "experiment", src("share/scenarios/qos-limited.exp")});
  EXPECT_EQ(m.rc, kExitOk);
  EXPECT_NE(m.out.find("\t10.000000\t"), std::string::npos) << m.out;
  EXPECT_EQ(qosctl({"experiment", src("share/scenarios/rate-limited.exp")}).rc, kExitOk);
}

TEST(Experiment, DeterministicPerSeed) {
  auto a = qosctl({"--machine", "--seed", "9", "experiment", src("share/scenarios/three-flow.exp")});
  auto b = qosctl({"--machine", "--seed", "9", "experiment", src("share/scenarios/three-flow.exp")});
  EXPECT_EQ(a.out, b.out);
}

TEST(Experiment, UsageErrors) {
  EXPECT_EQ(qosctl({"experiment", "/nonexistent.exp"}).rc, kExitUsage);
  EXPECT_EQ(qosctl({"experiment"}).rc, kExitUsage);
  EXPECT_EQ(qosctl({}).rc, kExitUsage);
  EXPECT_EQ(qosctl({"frobnicate"}).rc, kExitUsage);
  TempDir dir;
  textio::atomic_write_file(dir / "bad.exp", "pod name=a\n");
  EXPECT_EQ(qosctl({"experiment", (dir / "bad.exp").string()}).rc, kExitBadInput);
}

TEST(Share, ShippedFilesMatchBuiltIns) {
  EXPECT_EQ(textio::read_file(src("share/fwmark-registry.conf")), default_registry_document());
  EXPECT_EQ(textio::read_file(src("share/profiles.conf")), default_profile_table_document());
  auto t = load_profile_table(textio::read_file(src("share/profiles.conf")));
  EXPECT_EQ(t.default_five_qi(), 9u);
  auto cfg = DaemonConfig::load(src("share/qosd.json"), {});
  EXPECT_EQ(cfg.backend, "sim");
}
