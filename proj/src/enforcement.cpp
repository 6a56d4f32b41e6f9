#include "qosbridge/enforcement.hpp"

#include <arpa/inet.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <sstream>

#include "qosbridge/error.hpp"
#include "qosbridge/textio.hpp"

namespace qosbridge {

namespace {

bool is_ipv6(std::string_view ip) { return ip.find(':') != std::string_view::npos; }

bool valid_ip(const std::string& ip) {
  unsigned char buf[16];
  return ::inet_pton(is_ipv6(ip) ? AF_INET6 : AF_INET, ip.c_str(), buf) == 1;
}

std::string render_rule(const MarkRuleSpec& r, ActionVerb verb) {
  std::ostringstream os;
  os << (is_ipv6(r.match_source) ? "ip6tables" : "iptables") << " -t " << r.table
     << (verb == ActionVerb::install ? " -A " : " -D ") << r.chain << " -s " << r.match_source
     << (is_ipv6(r.match_source) ? "/128" : "/32") << " -j MARK --set-xmark " << textio::hex(r.set_mark_value) << "/"
     << textio::hex(r.set_mark_mask);
  return os.str();
}

// The fw classifier matches on the mark only; the protocol is left as "all"
// so both address families reach it.
std::string render_filter(const FilterSpec& f, ActionVerb verb) {
  std::ostringstream os;
  os << "tc filter " << (verb == ActionVerb::install ? "add" : "del") << " dev " << f.attach_interface
     << " parent 1: protocol all prio 1 handle " << textio::hex(f.match_mark) << "/" << textio::hex(f.match_mask) << " "
     << f.classifier;
  if (verb == ActionVerb::install) os << " flowid 1:" << f.target_flow.qfi;
  return os.str();
}

}  // namespace

EnforcementPlan build_plan(const FlowBinding& binding, std::uint32_t free_mask, std::string_view phys_if) {
  if (binding.pod_ip.empty()) throw Error(Errc::incomplete_binding, "binding has no pod IP");
  if (binding.mark.value() == 0) throw Error(Errc::incomplete_binding, "binding has no fwmark");
  if (binding.pdu_session_id.empty() || binding.qfi == 0) {
    throw Error(Errc::incomplete_binding, "binding has no QoS flow reference");
  }
  if (phys_if.empty()) throw Error(Errc::incomplete_binding, "no physical interface configured");
  if ((binding.mark.value() & ~free_mask) != 0) {
    throw Error(Errc::incomplete_binding, "mark " + textio::hex(binding.mark.value()) + " lies outside free mask " +
                                              textio::hex(free_mask));
  }
  if (!valid_ip(binding.pod_ip)) {
    throw Error(Errc::host_network_unsupported, "'" + binding.pod_ip + "' is not a pod address");
  }
  EnforcementPlan plan;
  MarkRuleSpec rule;
  rule.match_source = binding.pod_ip;
  rule.set_mark_value = binding.mark.value();
  rule.set_mark_mask = free_mask;
  FilterSpec filter;
  filter.attach_interface = std::string(phys_if);
  filter.match_mark = binding.mark.value();
  filter.match_mask = free_mask;
  filter.target_flow = binding.flow();
  plan.steps.push_back({rule});
  plan.steps.push_back({filter});
  return plan;
}

std::string render(const PlanAction& action) {
  return std::visit(
      [&](const auto& spec) -> std::string {
        using T = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<T, MarkRuleSpec>) return render_rule(spec, action.verb);
        else return render_filter(spec, action.verb);
      },
      action.spec);
}

std::vector<std::string> render_commands(const EnforcementPlan& plan) {
  std::vector<std::string> out;
  for (const auto& step : plan.steps) out.push_back(render(step.apply_action()));
  return out;
}

std::vector<std::string> render_revert_commands(const EnforcementPlan& plan) {
  std::vector<std::string> out;
  for (auto it = plan.steps.rbegin(); it != plan.steps.rend(); ++it) out.push_back(render(it->revert_action()));
  return out;
}

std::string dump_spec(const EnforcementSpec& spec) {
  return std::visit(
      [](const auto& s) -> std::string {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, MarkRuleSpec>) {
          return "rule " + s.table + "/" + s.chain + " src " + s.match_source + " set-mark " +
                 textio::hex8(s.set_mark_value) + "/" + textio::hex8(s.set_mark_mask);
        } else {
          return "filter dev " + s.attach_interface + " " + s.classifier + " " + textio::hex8(s.match_mark) + "/" +
                 textio::hex8(s.match_mask) + " -> " + to_string(s.target_flow);
        }
      },
      spec);
}

// SimBackend

std::string SimBackend::install(const EnforcementSpec& spec) {
  std::lock_guard lock(mutex_);
  if (installs_before_failure_ == 0) {
    installs_before_failure_ = -1;
    throw Error(Errc::backend_failure, "injected failure installing " + dump_spec(spec));
  }
  if (installs_before_failure_ > 0) --installs_before_failure_;
  bool inserted = std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, MarkRuleSpec>) return rules_.insert(s).second;
        else return filters_.insert(s).second;
      },
      spec);
  if (!inserted) throw Error(Errc::backend_failure, "duplicate: " + dump_spec(spec));
  return (spec.index() == 0 ? "rule-" : "filter-") + std::to_string(next_handle_++);
}

bool SimBackend::remove(const EnforcementSpec& spec) {
  std::lock_guard lock(mutex_);
  return std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, MarkRuleSpec>) return rules_.erase(s) > 0;
        else return filters_.erase(s) > 0;
      },
      spec);
}

bool SimBackend::contains(const EnforcementSpec& spec) const {
  std::lock_guard lock(mutex_);
  return std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, MarkRuleSpec>) return rules_.contains(s);
        else return filters_.contains(s);
      },
      spec);
}

std::vector<MarkRuleSpec> SimBackend::mark_rules() const {
  std::lock_guard lock(mutex_);
  return {rules_.begin(), rules_.end()};
}

std::vector<FilterSpec> SimBackend::filters() const {
  std::lock_guard lock(mutex_);
  return {filters_.begin(), filters_.end()};
}

std::string SimBackend::dump() const {
  std::lock_guard lock(mutex_);
  std::string out = "backend sim\n";
  for (const auto& r : rules_) out += dump_spec(r) + "\n";
  for (const auto& f : filters_) out += dump_spec(f) + "\n";
  return out;
}

void SimBackend::fail_install_after(int count) {
  std::lock_guard lock(mutex_);
  installs_before_failure_ = count;
}

void SimBackend::clear_failure() {
  std::lock_guard lock(mutex_);
  installs_before_failure_ = -1;
}

// ShellBackend

ShellBackend::ShellBackend(Runner runner) : runner_(std::move(runner)) {
  if (!runner_) runner_ = [](const std::string& cmd) { return std::system(cmd.c_str()); };
}

std::string ShellBackend::install(const EnforcementSpec& spec) {
  std::lock_guard lock(mutex_);
  if (shadow_.contains(spec)) throw Error(Errc::backend_failure, "duplicate: " + dump_spec(spec));
  auto cmd = render(PlanAction{ActionVerb::install, spec});
  if (int rc = runner_(cmd); rc != 0) {
    throw Error(Errc::backend_failure, "'" + cmd + "' exited with status " + std::to_string(rc));
  }
  return shadow_.install(spec);
}

bool ShellBackend::remove(const EnforcementSpec& spec) {
  std::lock_guard lock(mutex_);
  auto cmd = render(PlanAction{ActionVerb::remove, spec});
  bool known = shadow_.contains(spec);
  if (int rc = runner_(cmd); rc != 0) {
    if (!known) return false;
    throw Error(Errc::backend_failure, "'" + cmd + "' exited with status " + std::to_string(rc));
  }
  shadow_.remove(spec);
  return known;
}

bool ShellBackend::contains(const EnforcementSpec& spec) const {
  std::lock_guard lock(mutex_);
  return shadow_.contains(spec);
}

std::vector<MarkRuleSpec> ShellBackend::mark_rules() const {
  std::lock_guard lock(mutex_);
  return shadow_.mark_rules();
}

std::vector<FilterSpec> ShellBackend::filters() const {
  std::lock_guard lock(mutex_);
  return shadow_.filters();
}

std::string ShellBackend::dump() const {
  std::lock_guard lock(mutex_);
  auto text = shadow_.dump();
  return "backend shell" + text.substr(text.find('\n'));
}

ApplyReceipt apply(const EnforcementPlan& plan, Backend& backend) {
  ApplyReceipt receipt;
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    try {
      receipt.steps.push_back({plan.steps[i].spec, backend.install(plan.steps[i].spec)});
    } catch (const Error& e) {
      try {
        revert(receipt, backend);
      } catch (const Error& inner) {
        spdlog::error("enforcement: rollback after step {} failed: {}", i + 1, inner.what());
      }
      throw Error(Errc::backend_failure, "step " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return receipt;
}

int revert(ApplyReceipt& receipt, Backend& backend) {
  if (receipt.reverted) return 0;
  int drift = 0;
  while (!receipt.steps.empty()) {
    const auto& step = receipt.steps.back();
    if (!backend.remove(step.spec)) {
      ++drift;
      spdlog::warn("enforcement: {} was already gone", dump_spec(step.spec));
    }
    receipt.steps.pop_back();
  }
  receipt.reverted = true;
  return drift;
}

}  // namespace qosbridge
