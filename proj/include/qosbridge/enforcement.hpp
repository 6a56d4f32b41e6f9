#pragma once

#include <cstdint>
#include <functional>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "qosbridge/binding.hpp"

namespace qosbridge {

// Marks every packet sourced from a pod. The write only touches the bits in
// set_mark_mask, so marks owned by other software survive.
struct MarkRuleSpec {
  std::string table = "mangle";
  std::string chain = "PREROUTING";
  std::string match_source;
  std::uint32_t set_mark_value = 0;
  std::uint32_t set_mark_mask = 0;

  friend auto operator<=>(const MarkRuleSpec&, const MarkRuleSpec&) = default;
};

// fw classifier on the uplink interface steering a mark to a QoS flow.
struct FilterSpec {
  std::string attach_interface;
  std::string classifier = "fw";
  std::uint32_t match_mark = 0;
  std::uint32_t match_mask = 0;
  QosFlowRef target_flow;

  friend auto operator<=>(const FilterSpec&, const FilterSpec&) = default;
};

using EnforcementSpec = std::variant<MarkRuleSpec, FilterSpec>;

enum class ActionVerb { install, remove };

struct PlanAction {
  ActionVerb verb;
  EnforcementSpec spec;
};

struct PlanStep {
  EnforcementSpec spec;

  PlanAction apply_action() const { return {ActionVerb::install, spec}; }
  PlanAction revert_action() const { return {ActionVerb::remove, spec}; }
};

struct EnforcementPlan {
  std::vector<PlanStep> steps;
};

// One mark rule followed by one fw filter, egress only. Throws
// Errc::incomplete_binding if the pod IP, mark or flow is missing, and
// Errc::host_network_unsupported if the pod IP is not a valid address.
EnforcementPlan build_plan(const FlowBinding& binding, std::uint32_t free_mask, std::string_view phys_if);

// Shell text for each step, in apply order:
//
//   iptables -t mangle -A PREROUTING -s <ip>/32 -j MARK --set-xmark <value>/<mask>
//   tc filter add dev <if> parent 1: protocol all prio 1 handle <mark>/<mask> fw flowid 1:<qfi>
//
// IPv6 sources use ip6tables and /128. Values are lowercase hex without
// padding.
std::vector<std::string> render_commands(const EnforcementPlan& plan);

// The inverse commands, in revert (reverse) order.
std::vector<std::string> render_revert_commands(const EnforcementPlan& plan);

std::string render(const PlanAction& action);

class Backend {
 public:
  virtual ~Backend() = default;

  // Throws Errc::backend_failure if the spec is already installed or the
  // backend refuses it. Returns an opaque handle.
  virtual std::string install(const EnforcementSpec& spec) = 0;

  // Returns false when the spec was not present (drift).
  virtual bool remove(const EnforcementSpec& spec) = 0;

  virtual bool contains(const EnforcementSpec& spec) const = 0;

  virtual std::vector<MarkRuleSpec> mark_rules() const = 0;
  virtual std::vector<FilterSpec> filters() const = 0;

  // Canonical sorted text, one spec per line.
  virtual std::string dump() const = 0;
};

// In-memory backend used by the simulation and the test suites.
class SimBackend : public Backend {
 public:
  std::string install(const EnforcementSpec& spec) override;
  bool remove(const EnforcementSpec& spec) override;
  bool contains(const EnforcementSpec& spec) const override;
  std::vector<MarkRuleSpec> mark_rules() const override;
  std::vector<FilterSpec> filters() const override;
  std::string dump() const override;

  // Test hook: the next `count` installs succeed, the one after fails.
  void fail_install_after(int count);
  void clear_failure();

 private:
  mutable std::mutex mutex_;
  std::set<MarkRuleSpec> rules_;
  std::set<FilterSpec> filters_;
  std::uint64_t next_handle_ = 1;
  int installs_before_failure_ = -1;
};

// Runs rendered commands through `runner` (exit status 0 = success) and
// tracks what it installed so it can answer contains()/dump().
class ShellBackend : public Backend {
 public:
  using Runner = std::function<int(const std::string& command)>;

  // Defaults to std::system.
  explicit ShellBackend(Runner runner = {});

  std::string install(const EnforcementSpec& spec) override;
  bool remove(const EnforcementSpec& spec) override;
  bool contains(const EnforcementSpec& spec) const override;
  std::vector<MarkRuleSpec> mark_rules() const override;
  std::vector<FilterSpec> filters() const override;
  std::string dump() const override;

 private:
  Runner runner_;
  SimBackend shadow_;
  mutable std::mutex mutex_;
};

struct AppliedStep {
  EnforcementSpec spec;
  std::string handle;
};

struct ApplyReceipt {
  std::vector<AppliedStep> steps;
  bool reverted = false;
};

// Applies steps in order. If step k fails, steps before it are reverted and
// Errc::backend_failure is thrown naming the step index.
ApplyReceipt apply(const EnforcementPlan& plan, Backend& backend);

// Reverts in reverse order; a second call is a no-op. Specs already gone
// from the backend are logged as drift. Returns the number of drifted steps.
int revert(ApplyReceipt& receipt, Backend& backend);

std::string dump_spec(const EnforcementSpec& spec);

}  // namespace qosbridge
