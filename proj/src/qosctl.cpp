#include "qosbridge/qosctl.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <optional>
#include <ostream>

#include "qosbridge/daemon_api.hpp"
#include "qosbridge/emulator_http.hpp"
#include "qosbridge/error.hpp"
#include "qosbridge/overlay.hpp"
#include "qosbridge/textio.hpp"

namespace qosbridge {

std::string bit_ranges(std::uint32_t mask) {
  std::string out;
  int bit = 0;
  while (bit < 32) {
    if (!(mask >> bit & 1u)) {
      ++bit;
      continue;
    }
    int end = bit;
    while (end + 1 < 32 && (mask >> (end + 1) & 1u)) ++end;
    if (!out.empty()) out += ",";
    out += end == bit ? std::to_string(bit) : fmt::format("{}-{}", bit, end);
    bit = end + 1;
  }
  return out.empty() ? "-" : out;
}

std::string render_fwmark_audit(const std::vector<ReservedEntry>& entries, const std::string& source, bool machine) {
  const std::uint32_t reserved = reserved_mask(entries);
  const std::uint32_t free = ~reserved;
  const int k = free_bit_count(free);
  std::string out;
  if (machine) {
    out += "record\tname\tmask\tbits\n";
    for (const auto& e : entries) {
      out += fmt::format("entry\t{}\t{}\t{}\n", e.software_name, textio::hex8(e.mark_mask), bit_ranges(e.mark_mask));
    }
    out += fmt::format("reserved\t-\t{}\t{}\n", textio::hex8(reserved), bit_ranges(reserved));
    out += fmt::format("free\t-\t{}\t{}\n", textio::hex8(free), bit_ranges(free));
    out += fmt::format("capacity\t-\t{}\t{}\n", k, mark_capacity(free));
    return out;
  }
  out += "registry " + source + "\n";
  for (const auto& e : entries) {
    out += fmt::format("  {:<14} {}  bits {}\n", e.software_name, textio::hex8(e.mark_mask), bit_ranges(e.mark_mask));
  }
  for (int bit = 0; bit < 32; ++bit) {
    std::vector<std::string> owners;
    for (const auto& e : entries) {
      if (e.mark_mask >> bit & 1u) owners.push_back(e.software_name);
    }
    if (owners.size() > 1) out += fmt::format("  overlap at bit {}: {}\n", bit, fmt::join(owners, ", "));
  }
  out += fmt::format("reserved mask {}\n", textio::hex8(reserved));
  out += fmt::format("free mask     {}  bits {}\n", textio::hex8(free), bit_ranges(free));
  out += fmt::format("{} free bit{}, capacity {} mark{}\n", k, k == 1 ? "" : "s", mark_capacity(free),
                     mark_capacity(free) == 1 ? "" : "s");
  return out;
}

std::string render_bindings(std::vector<FlowBinding> bindings, bool machine) {
  std::sort(bindings.begin(), bindings.end(),
            [](const FlowBinding& a, const FlowBinding& b) { return a.container_id < b.container_id; });
  std::string out;
  if (machine) {
    out += "container\tpod_ip\tmark\tsession\tqfi\tfive_qi\tdelay_ms\n";
    for (const auto& b : bindings) {
      out += fmt::format("{}\t{}\t{}\t{}\t{}\t{}\t{}\n", b.container_id, b.pod_ip, textio::hex(b.mark.value()),
                         b.pdu_session_id, b.qfi, b.profile.five_qi, b.profile.packet_delay_budget_ms);
    }
    return out;
  }
  out += fmt::format("{:<24} {:<15} {:<10} {:<22} {:>4} {:>8}\n", "CONTAINER", "POD-IP", "MARK", "FLOW", "5QI",
                     "DELAY-MS");
  for (const auto& b : bindings) {
    out += fmt::format("{:<24} {:<15} {:<10} {:<22} {:>4} {:>8}\n", b.container_id, b.pod_ip,
                       textio::hex(b.mark.value()), to_string(b.flow()), b.profile.five_qi,
                       b.profile.packet_delay_budget_ms);
  }
  return out;
}

namespace {

int exit_for(Errc code) {
  switch (code) {
    case Errc::daemon_unreachable: return kExitDaemonUnreachable;
    case Errc::emulator_unreachable: return kExitEmulatorUnreachable;
    case Errc::malformed_config:
    case Errc::malformed_mask:
    case Errc::duplicate_software_name:
    case Errc::duplicate_five_qi:
    case Errc::missing_default:
    case Errc::invalid_profile:
    case Errc::invalid_requirement: return kExitBadInput;
    default: return kExitFailure;
  }
}

}  // namespace

int run_qosctl(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Inspect the QoS daemon and the emulated network, run experiments, audit fwmark registries"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  std::string daemon_socket = "/run/qosd/qosd.sock";
  std::string emulator_url = "http://127.0.0.1:8080";
  bool machine = false;
  std::optional<std::uint64_t> seed;
  app.add_option("--daemon-socket", daemon_socket, "qosd socket path");
  app.add_option("--emulator-url", emulator_url, "emulator base URL");
  app.add_flag("--machine", machine, "tab-separated output");
  app.add_option("--seed", seed, "override the experiment seed");

  auto* bindings = app.add_subcommand("bindings", "list live bindings");
  std::string registry_file;
  auto* audit = app.add_subcommand("fwmark-audit", "report reserved and free fwmark bits");
  audit->add_option("registry", registry_file, "registry file (default: built-in table)");
  std::string experiment_file;
  auto* experiment = app.add_subcommand("experiment", "run a priority experiment");
  experiment->add_option("description", experiment_file, "experiment description file")->required();
  auto* tree = app.add_subcommand("tree", "print the emulator's qdisc/class/filter tree");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "qosctl: " << e.what() << "\n" << "run 'qosctl --help' for usage\n";
    return kExitUsage;
  }

  try {
    if (*bindings) {
      SocketDaemonClient client(daemon_socket);
      out << render_bindings(client.bindings(), machine);
    } else if (*audit) {
      std::vector<ReservedEntry> entries;
      std::vector<std::string> warnings;
      if (registry_file.empty()) {
        entries = load_registry(default_registry_document(), &warnings);
      } else {
        if (!std::filesystem::exists(registry_file)) {
          err << "qosctl: no such registry file: " << registry_file << "\n";
          return kExitUsage;
        }
        entries = load_registry(textio::read_file(registry_file), &warnings);
      }
      out << render_fwmark_audit(entries, registry_file.empty() ? "built-in" : registry_file, machine);
    } else if (*experiment) {
      if (!std::filesystem::exists(experiment_file)) {
        err << "qosctl: no such experiment file: " << experiment_file << "\n";
        return kExitUsage;
      }
      auto desc = overlay::parse_experiment(textio::read_file(experiment_file));
      auto report = overlay::run_experiment(desc, seed);
      out << (machine ? report.render_machine() : report.render_text());
    } else if (*tree) {
      HttpEmulatorClient client(emulator_url);
      out << client.dump_tree();
    }
  } catch (const Error& e) {
    err << "qosctl: " << to_string(e.code()) << ": " << e.what() << "\n";
    return exit_for(e.code());
  } catch (const std::exception& e) {
    err << "qosctl: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace qosbridge
