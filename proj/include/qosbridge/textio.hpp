#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qosbridge::textio {

// "0x2000" style: lowercase, no zero padding.
std::string hex(std::uint32_t value);

// Fixed-width "0x00002000" style.
std::string hex8(std::uint32_t value);

// Accepts "0x"-prefixed or bare hex digits; rejects anything outside 32 bits.
std::optional<std::uint32_t> parse_hex32(std::string_view text);

std::optional<std::uint64_t> parse_uint(std::string_view text);

std::string_view trim(std::string_view text);

std::vector<std::string> split_ws(std::string_view text);

// Strips a trailing '#' comment and surrounding whitespace.
std::string_view strip_comment(std::string_view line);

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary file, flushes, then renames over `path`.
// Throws std::runtime_error on any I/O failure; `path` is untouched then.
void atomic_write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace qosbridge::textio
