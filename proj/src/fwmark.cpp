#include "qosbridge/fwmark.hpp"

#include <spdlog/spdlog.h>

#include <bit>
#include <mutex>
#include <sstream>
#include <unordered_set>

#include "qosbridge/error.hpp"
#include "qosbridge/textio.hpp"

namespace qosbridge {

namespace {

constexpr std::string_view kDefaultRegistry =
    "# Known fwmark users on Kubernetes nodes.\n"
    "# <software> <mask>\n"
    "Cilium      0xFFFF1FFF  # bits 0-12,16-31\n"
    "AWS CNI     0x00000080  # bit 7\n"
    "CNI Portmap 0x00002000  # bit 13\n"
    "Kubernetes  0x0000C000  # bits 14-15\n"
    "Calico      0xFFFF0000  # bits 16-31\n"
    "Weave Net   0x00060000  # bits 17-18\n"
    "Tailscale   0x000C0000  # bits 18-19\n";

constexpr std::string_view kStateHeader = "fwmark-state 1";

}  // namespace

std::vector<ReservedEntry> load_registry(std::string_view document, std::vector<std::string>* warnings) {
  std::vector<ReservedEntry> entries;
  std::unordered_set<std::string> names;
  std::istringstream in{std::string(document)};
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    auto line = textio::strip_comment(raw);
    if (line.empty()) continue;
    auto split = line.find_last_of(" \t");
    if (split == std::string_view::npos) {
      throw Error(Errc::malformed_mask, "registry line " + std::to_string(lineno) + ": expected '<name> <hex-mask>'");
    }
    std::string name(textio::trim(line.substr(0, split)));
    auto mask = textio::parse_hex32(line.substr(split + 1));
    if (!mask) {
      throw Error(Errc::malformed_mask, "registry line " + std::to_string(lineno) + ": '" +
                                            std::string(line.substr(split + 1)) + "' is not a 32-bit hex mask");
    }
    if (*mask == 0) {
      throw Error(Errc::malformed_mask, "registry line " + std::to_string(lineno) + ": mask for " + name + " is zero");
    }
    if (!names.insert(name).second) {
      throw Error(Errc::duplicate_software_name, "registry line " + std::to_string(lineno) + ": duplicate entry " + name);
    }
    for (const auto& prev : entries) {
      if (prev.mark_mask & *mask) {
        auto msg = name + " (" + textio::hex8(*mask) + ") overlaps " + prev.software_name + " (" +
                   textio::hex8(prev.mark_mask) + ")";
        spdlog::warn("fwmark registry: {}", msg);
        if (warnings) warnings->push_back(std::move(msg));
      }
    }
    entries.push_back({std::move(name), *mask});
  }
  return entries;
}

std::string_view default_registry_document() { return kDefaultRegistry; }

std::uint32_t reserved_mask(std::span<const ReservedEntry> entries) noexcept {
  std::uint32_t mask = 0;
  for (const auto& e : entries) mask |= e.mark_mask;
  return mask;
}

std::uint32_t free_mask(std::span<const ReservedEntry> entries) noexcept { return ~reserved_mask(entries); }

int free_bit_count(std::uint32_t free) noexcept { return std::popcount(free); }

std::uint64_t mark_capacity(std::uint32_t free) noexcept {
  return (std::uint64_t{1} << free_bit_count(free)) - 1;
}

FwMarkSpace::FwMarkSpace(std::vector<ReservedEntry> entries, std::filesystem::path persistence_path)
    : entries_(std::move(entries)), reserved_(qosbridge::reserved_mask(entries_)), path_(std::move(persistence_path)) {
  if (path_.empty() || !std::filesystem::exists(path_)) return;
  auto restored = from_state_file(path_);
  for (auto value : restored->allocated_) {
    if (value & reserved_) {
      throw Error(Errc::persistence_failure,
                  "persisted mark " + textio::hex(value) + " collides with the configured reserved mask");
    }
  }
  allocated_ = std::move(restored->allocated_);
}

std::unique_ptr<FwMarkSpace> FwMarkSpace::from_state_file(const std::filesystem::path& path) {
  std::string text;
  try {
    text = textio::read_file(path);
  } catch (const std::exception& e) {
    throw Error(Errc::persistence_failure, e.what());
  }
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || textio::trim(line) != kStateHeader) {
    throw Error(Errc::persistence_failure, path.string() + ": missing '" + std::string(kStateHeader) + "' header");
  }
  std::vector<ReservedEntry> entries;
  std::set<std::uint32_t> allocated;
  while (std::getline(in, line)) {
    auto body = textio::trim(line);
    if (body.empty()) continue;
    auto fields = textio::split_ws(body);
    if (fields[0] == "reserved" && fields.size() >= 3) {
      auto mask = textio::parse_hex32(fields[1]);
      auto name_pos = body.find(fields[1]) + fields[1].size();
      if (!mask) throw Error(Errc::persistence_failure, path.string() + ": bad reserved mask " + fields[1]);
      entries.push_back({std::string(textio::trim(body.substr(name_pos))), *mask});
    } else if (fields[0] == "allocated" && fields.size() == 2) {
      auto value = textio::parse_hex32(fields[1]);
      if (!value || *value == 0) throw Error(Errc::persistence_failure, path.string() + ": bad mark " + fields[1]);
      allocated.insert(*value);
    } else {
      throw Error(Errc::persistence_failure, path.string() + ": unrecognized line '" + std::string(body) + "'");
    }
  }
  auto space = std::make_unique<FwMarkSpace>(std::move(entries));
  for (auto value : allocated) {
    if (value & space->reserved_) {
      throw Error(Errc::persistence_failure, path.string() + ": mark " + textio::hex(value) + " uses reserved bits");
    }
  }
  space->allocated_ = std::move(allocated);
  space->path_ = path;
  return space;
}

FwMark FwMarkSpace::allocate() {
  std::unique_lock lock(mutex_);
  const std::uint32_t free = ~reserved_;
  // Walks the submasks of `free` in increasing numeric order.
  std::uint32_t candidate = 0;
  for (;;) {
    candidate = ((candidate | reserved_) + 1) & free;
    if (candidate == 0) {
      throw Error(Errc::allocation_exhausted, "no free fwmark left within mask " + textio::hex8(free));
    }
    if (!allocated_.contains(candidate)) break;
  }
  allocated_.insert(candidate);
  const bool was_dirty = dirty_;
  try {
    persist_locked();
  } catch (...) {
    allocated_.erase(candidate);
    dirty_ = was_dirty;
    throw;
  }
  return FwMark(candidate);
}

void FwMarkSpace::release(FwMark mark) {
  std::unique_lock lock(mutex_);
  if (allocated_.erase(mark.value()) == 0 && !dirty_) return;
  persist_locked();
}

bool FwMarkSpace::flush() {
  std::unique_lock lock(mutex_);
  if (!dirty_) return true;
  try {
    persist_locked();
  } catch (const Error&) {
    return false;
  }
  return true;
}

bool FwMarkSpace::is_allocated(FwMark mark) const {
  std::shared_lock lock(mutex_);
  return allocated_.contains(mark.value());
}

std::vector<std::uint32_t> FwMarkSpace::allocated() const {
  std::shared_lock lock(mutex_);
  return {allocated_.begin(), allocated_.end()};
}

std::size_t FwMarkSpace::allocated_count() const {
  std::shared_lock lock(mutex_);
  return allocated_.size();
}

std::string FwMarkSpace::serialize() const {
  std::shared_lock lock(mutex_);
  return serialize_locked();
}

std::string FwMarkSpace::serialize_locked() const {
  std::string out(kStateHeader);
  out += '\n';
  for (const auto& e : entries_) out += "reserved " + textio::hex8(e.mark_mask) + " " + e.software_name + "\n";
  for (auto value : allocated_) out += "allocated " + textio::hex8(value) + "\n";
  return out;
}

void FwMarkSpace::persist_locked() {
  if (path_.empty()) return;
  try {
    textio::atomic_write_file(path_, serialize_locked());
    dirty_ = false;
  } catch (const std::exception& e) {
    dirty_ = true;
    throw Error(Errc::persistence_failure, e.what());
  }
}

}  // namespace qosbridge
