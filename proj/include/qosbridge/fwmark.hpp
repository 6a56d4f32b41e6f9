#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qosbridge {

// A packet mark owned by some other software on the node.
struct ReservedEntry {
  std::string software_name;
  std::uint32_t mark_mask = 0;

  friend bool operator==(const ReservedEntry&, const ReservedEntry&) = default;
};

class FwMark {
 public:
  constexpr FwMark() = default;
  constexpr explicit FwMark(std::uint32_t value) : value_(value) {}

  constexpr std::uint32_t value() const noexcept { return value_; }

  friend constexpr auto operator<=>(FwMark, FwMark) = default;

 private:
  std::uint32_t value_ = 0;
};

// Registry document grammar, one entry per line:
//
//   <software name> <hex mask>     # trailing comments allowed
//
// The name is everything before the last whitespace-separated token, so it
// may contain spaces ("CNI Portmap"). Overlapping masks are accepted; a
// warning is appended to `warnings` for each overlapping pair.
std::vector<ReservedEntry> load_registry(std::string_view document,
                                         std::vector<std::string>* warnings = nullptr);

// The seven well-known fwmark users (Cilium, AWS CNI, CNI Portmap,
// Kubernetes, Calico, Weave Net, Tailscale).
std::string_view default_registry_document();

std::uint32_t reserved_mask(std::span<const ReservedEntry> entries) noexcept;

// Complement of the reserved mask: the bits this plugin may write.
std::uint32_t free_mask(std::span<const ReservedEntry> entries) noexcept;

int free_bit_count(std::uint32_t free) noexcept;

// Number of distinct nonzero marks expressible with the free bits (2^k - 1).
std::uint64_t mark_capacity(std::uint32_t free) noexcept;

// The allocatable mark space. All mutations are serialized by one writer
// lock and persisted (atomic rename) before they return; readers of the
// masks never block each other.
//
// State file format:
//
//   fwmark-state 1
//   reserved <hex mask> <software name>
//   allocated <hex value>
class FwMarkSpace {
 public:
  // An empty path disables persistence. If `persistence_path` exists, the
  // allocated set is restored from it and checked against `entries`.
  explicit FwMarkSpace(std::vector<ReservedEntry> entries,
                       std::filesystem::path persistence_path = {});

  // Restores both the registry and the allocated set from a state file.
  static std::unique_ptr<FwMarkSpace> from_state_file(const std::filesystem::path& path);

  FwMarkSpace(const FwMarkSpace&) = delete;
  FwMarkSpace& operator=(const FwMarkSpace&) = delete;

  const std::vector<ReservedEntry>& entries() const noexcept { return entries_; }
  std::uint32_t reserved_mask() const noexcept { return reserved_; }
  std::uint32_t free_mask() const noexcept { return ~reserved_; }
  const std::filesystem::path& persistence_path() const noexcept { return path_; }

  // Lowest unallocated nonzero value whose bits lie within free_mask().
  // Throws Errc::allocation_exhausted, or Errc::persistence_failure (the
  // in-memory allocation is rolled back in that case).
  FwMark allocate();

  // Removing an unknown mark is a no-op. On persistence failure the
  // in-memory release is kept, the write is retried by the next mutation or
  // flush(), and Errc::persistence_failure is thrown.
  void release(FwMark mark);

  // Retries a pending write. Returns true if state is durable afterwards.
  bool flush();

  bool is_allocated(FwMark mark) const;
  std::vector<std::uint32_t> allocated() const;
  std::size_t allocated_count() const;

  // Canonical state text; identical to the persisted file content.
  std::string serialize() const;

 private:
  std::string serialize_locked() const;
  void persist_locked();

  std::vector<ReservedEntry> entries_;
  std::uint32_t reserved_ = 0;
  std::filesystem::path path_;
  std::set<std::uint32_t> allocated_;
  bool dirty_ = false;
  mutable std::shared_mutex mutex_;
};

}  // namespace qosbridge
