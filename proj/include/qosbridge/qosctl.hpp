#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "qosbridge/binding.hpp"
#include "qosbridge/fwmark.hpp"

namespace qosbridge {

// qosctl exit statuses.
enum QosctlExit : int {
  kExitOk = 0,
  kExitFailure = 1,             // anything not listed below
  kExitUsage = 2,               // bad arguments, missing file
  kExitDaemonUnreachable = 3,
  kExitEmulatorUnreachable = 4,
  kExitBadInput = 5,            // registry / experiment file rejected
};

// "0-12,16-31"
std::string bit_ranges(std::uint32_t mask);

std::string render_fwmark_audit(const std::vector<ReservedEntry>& entries, const std::string& source, bool machine);

// Rows sorted by container id.
std::string render_bindings(std::vector<FlowBinding> bindings, bool machine);

// args[0] is the program name.
int run_qosctl(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qosbridge
