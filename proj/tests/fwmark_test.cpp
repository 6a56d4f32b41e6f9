#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <set>
#include <thread>

#include "qosbridge/error.hpp"
#include "qosbridge/fwmark.hpp"
#include "qosbridge/textio.hpp"
#include "support/node.hpp"
#include "support/oracles.hpp"

using namespace qosbridge;
using testing_support::TempDir;

namespace {

std::vector<ReservedEntry> table_i() { return load_registry(default_registry_document()); }

std::uint32_t mask_of(const std::vector<ReservedEntry>& entries, const std::string& name) {
  for (const auto& e : entries) {
    if (e.software_name == name) return e.mark_mask;
  }
  ADD_FAILURE() << "no entry " << name;
  return 0;
}

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no Error thrown";
  return Errc::bad_request;
}

}  // namespace

TEST(Registry, DefaultDocumentHasSevenWellKnownRows) {
  auto entries = table_i();
  ASSERT_EQ(entries.size(), 7u);
  EXPECT_EQ(mask_of(entries, "Cilium"), 0xFFFF1FFFu);
  EXPECT_EQ(mask_of(entries, "AWS CNI"), 0x00000080u);
  EXPECT_EQ(mask_of(entries, "CNI Portmap"), 0x00002000u);
  EXPECT_EQ(mask_of(entries, "Kubernetes"), 0x0000C000u);
  EXPECT_EQ(mask_of(entries, "Calico"), 0xFFFF0000u);
  EXPECT_EQ(mask_of(entries, "Weave Net"), 0x00060000u);
  EXPECT_EQ(mask_of(entries, "Tailscale"), 0x000C0000u);
}

TEST(Registry, FullTableLeavesNoFreeBits) {
  auto entries = table_i();
  EXPECT_EQ(reserved_mask(entries), oracle::kTableIReservedMask);
  EXPECT_EQ(free_mask(entries), 0u);
  EXPECT_EQ(free_bit_count(free_mask(entries)), 0);
  EXPECT_EQ(mark_capacity(free_mask(entries)), 0u);
}

TEST(Registry, CiliumAloneLeavesThreeBits) {
  auto entries = load_registry(testing_support::kCiliumRegistry);
  EXPECT_EQ(free_mask(entries), oracle::kCiliumOnlyFreeMask);
  EXPECT_EQ(free_bit_count(free_mask(entries)), 3);
  EXPECT_EQ(mark_capacity(free_mask(entries)), 7u);
}

TEST(Registry, EmptyDocument) {
  EXPECT_TRUE(load_registry("").empty());
  EXPECT_TRUE(load_registry("# only a comment\n\n").empty());
  EXPECT_EQ(free_mask(std::vector<ReservedEntry>{}), 0xFFFFFFFFu);
}

TEST(Registry, RejectsBadMasks) {
  EXPECT_EQ(code_of([] { load_registry("Foo 0xZZ\n"); }), Errc::malformed_mask);
  EXPECT_EQ(code_of([] { load_registry("Foo 0x1FFFFFFFF\n"); }), Errc::malformed_mask);
  EXPECT_EQ(code_of([] { load_registry("Foo 0x0\n"); }), Errc::malformed_mask);
  EXPECT_EQ(code_of([] { load_registry("0x80\n"); }), Errc::malformed_mask);
}

TEST(Registry, RejectsDuplicateNames) {
  EXPECT_EQ(code_of([] { load_registry("Foo 0x1\nFoo 0x2\n"); }), Errc::duplicate_software_name);
}

TEST(Registry, OverlapsAreAllowedWithAWarning) {
  std::vector<std::string> warnings;
  auto entries = load_registry("Weave Net 0x00060000\nTailscale 0x000C0000\n", &warnings);
  ASSERT_EQ(entries.size(), 2u);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("Tailscale"), std::string::npos);
  EXPECT_EQ(reserved_mask(entries), 0x000E0000u);
}

TEST(Registry, FreeMaskIsHomomorphicOverEntryUnion) {
  std::mt19937_64 rng(7);
  for (int round = 0; round < 500; ++round) {
    std::vector<ReservedEntry> entries;
    const int n = static_cast<int>(rng() % 6);
    for (int i = 0; i < n; ++i) entries.push_back({"e" + std::to_string(i), static_cast<std::uint32_t>(rng() | 1)});
    ReservedEntry extra{"extra", static_cast<std::uint32_t>(rng()) | 0x10};
    auto with = entries;
    with.push_back(extra);
    EXPECT_EQ(free_mask(with), free_mask(entries) & ~extra.mark_mask);
  }
}

TEST(Allocator, LowestValueFirst) {
  FwMarkSpace space(load_registry(testing_support::kCiliumRegistry));
  EXPECT_EQ(space.allocate().value(), 0x2000u);
  EXPECT_EQ(space.allocate().value(), 0x4000u);
  EXPECT_EQ(space.allocate().value(), 0x6000u);
}

TEST(Allocator, MatchesSubmaskEnumeration) {
  const auto expected = oracle::expressible_marks(oracle::kCiliumOnlyFreeMask);
  ASSERT_EQ(expected.size(), 7u);
  FwMarkSpace space(load_registry(testing_support::kCiliumRegistry));
  std::vector<std::uint32_t> got;
  for (int i = 0; i < 7; ++i) got.push_back(space.allocate().value());
  EXPECT_EQ(got, expected);
  EXPECT_EQ(code_of([&] { space.allocate(); }), Errc::allocation_exhausted);
}

TEST(Allocator, FillsGapsPerOracle) {
  std::mt19937_64 rng(11);
  const std::uint32_t free = 0x0001A300;  // scattered bits
  std::vector<ReservedEntry> entries{{"rest", ~free}};
  for (int round = 0; round < 50; ++round) {
    FwMarkSpace space(entries);
    std::vector<std::uint32_t> live;
    for (int op = 0; op < 40; ++op) {
      if (!live.empty() && rng() % 3 == 0) {
        auto idx = rng() % live.size();
        space.release(FwMark(live[idx]));
        live.erase(live.begin() + static_cast<long>(idx));
        continue;
      }
      auto want = oracle::lowest_free_mark(free, live);
      if (!want) {
        EXPECT_EQ(code_of([&] { space.allocate(); }), Errc::allocation_exhausted);
        continue;
      }
      auto got = space.allocate().value();
      EXPECT_EQ(got, *want);
      EXPECT_EQ(got & ~free, 0u);
      live.push_back(got);
    }
  }
}

TEST(Allocator, FullRegistryIsExhaustedImmediately) {
  FwMarkSpace space(table_i());
  EXPECT_EQ(code_of([&] { space.allocate(); }), Errc::allocation_exhausted);
  EXPECT_EQ(space.allocated_count(), 0u);
}

TEST(Allocator, ReleaseIsIdempotentAndValuesAreReused) {
  FwMarkSpace space(load_registry(testing_support::kCiliumRegistry));
  auto a = space.allocate();
  space.release(a);
  EXPECT_FALSE(space.is_allocated(a));
  const auto before = space.serialize();
  space.release(FwMark(0x4000));
  EXPECT_EQ(space.serialize(), before);
  EXPECT_EQ(space.allocate(), a);
}

TEST(Allocator, PersistsAndReloads) {
  TempDir dir;
  const auto path = dir / "marks.state";
  const auto entries = load_registry(testing_support::kCiliumRegistry);
  std::string empty_state;
  {
    FwMarkSpace space(entries, path);
    empty_state = space.serialize();
    space.allocate();
    space.allocate();
    space.allocate();
    space.release(FwMark(0x4000));
    EXPECT_EQ(textio::read_file(path), space.serialize());
  }
  FwMarkSpace reopened(entries, path);
  EXPECT_EQ(reopened.allocated(), (std::vector<std::uint32_t>{0x2000, 0x6000}));
  EXPECT_EQ(reopened.allocate().value(), 0x4000u);

  auto from_file = FwMarkSpace::from_state_file(path);
  EXPECT_EQ(from_file->serialize(), reopened.serialize());
  EXPECT_EQ(from_file->entries(), entries);

  reopened.release(FwMark(0x2000));
  reopened.release(FwMark(0x4000));
  reopened.release(FwMark(0x6000));
  EXPECT_EQ(textio::read_file(path), empty_state);
}

TEST(Allocator, StateFileFormat) {
  FwMarkSpace space(load_registry("CNI Portmap 0x00002000\n"));
  space.allocate();
  space.allocate();
  EXPECT_EQ(space.serialize(),
            "fwmark-state 1\n"
            "reserved 0x00002000 CNI Portmap\n"
            "allocated 0x00000001\n"
            "allocated 0x00000002\n");
}

TEST(Allocator, CrashMidSequenceReloadsExactSet) {
  TempDir dir;
  const auto path = dir / "marks.state";
  const auto entries = load_registry(testing_support::kRoomyRegistry);
  std::mt19937_64 rng(3);
  std::set<std::uint32_t> model;
  auto space = std::make_unique<FwMarkSpace>(entries, path);
  for (int op = 0; op < 300; ++op) {
    if (!model.empty() && rng() % 2) {
      auto it = model.begin();
      std::advance(it, static_cast<long>(rng() % model.size()));
      space->release(FwMark(*it));
      model.erase(it);
    } else {
      model.insert(space->allocate().value());
    }
    if (op % 17 == 0) space = std::make_unique<FwMarkSpace>(entries, path);  // "crash" and reopen
    auto got = space->allocated();
    ASSERT_EQ(std::set<std::uint32_t>(got.begin(), got.end()), model);
  }
}

TEST(Allocator, PersistenceFailureRollsBackAllocate) {
  TempDir dir;
  const auto path = dir / "gone" / "marks.state";  // parent directory does not exist
  FwMarkSpace space(load_registry(testing_support::kCiliumRegistry), path);
  EXPECT_EQ(code_of([&] { space.allocate(); }), Errc::persistence_failure);
  EXPECT_EQ(space.allocated_count(), 0u);
}

TEST(Allocator, PersistenceFailureOnReleaseKeepsInMemoryChange) {
  TempDir dir;
  const auto sub = dir / "state";
  std::filesystem::create_directories(sub);
  FwMarkSpace space(load_registry(testing_support::kCiliumRegistry), sub / "marks.state");
  auto m = space.allocate();
  std::filesystem::remove_all(sub);
  EXPECT_EQ(code_of([&] { space.release(m); }), Errc::persistence_failure);
  EXPECT_FALSE(space.is_allocated(m));
  EXPECT_FALSE(space.flush());
  std::filesystem::create_directories(sub);
  EXPECT_TRUE(space.flush());
  EXPECT_EQ(textio::read_file(sub / "marks.state"), space.serialize());
}

TEST(Allocator, ReloadRejectsMarksOnReservedBits) {
  TempDir dir;
  const auto path = dir / "marks.state";
  {
    FwMarkSpace space(load_registry(""), path);
    space.allocate();  // 0x1
  }
  EXPECT_EQ(code_of([&] { FwMarkSpace(load_registry("Low 0x1\n"), path); }), Errc::persistence_failure);
}

TEST(Allocator, ConcurrentCallersNeverShareAMark) {
  for (int round = 0; round < 20; ++round) {
    FwMarkSpace space(load_registry(testing_support::kRoomyRegistry));
    std::vector<std::vector<std::uint32_t>> got(8);
    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t) {
      threads.emplace_back([&, t] {
        for (int i = 0; i < 32; ++i) got[t].push_back(space.allocate().value());
      });
    }
    for (auto& th : threads) th.join();
    std::set<std::uint32_t> all;
    for (const auto& v : got) {
      for (auto m : v) {
        EXPECT_TRUE(all.insert(m).second) << "duplicate mark " << m;
        EXPECT_EQ(m & space.reserved_mask(), 0u);
        EXPECT_NE(m, 0u);
      }
    }
    EXPECT_EQ(all.size(), 256u);
  }
}
