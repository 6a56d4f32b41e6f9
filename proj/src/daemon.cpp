#include "qosbridge/daemon.hpp"

#include <arpa/inet.h>
#include <spdlog/spdlog.h>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <sstream>
#include <thread>

#include "qosbridge/emulator_http.hpp"
#include "qosbridge/error.hpp"
#include "qosbridge/textio.hpp"

namespace qosbridge {

using nlohmann::json;

std::string_view to_string(AddStep step) noexcept {
  switch (step) {
    case AddStep::begun: return "begun";
    case AddStep::mark_allocated: return "mark-allocated";
    case AddStep::session_ready: return "session-ready";
    case AddStep::flow_created: return "flow-created";
    case AddStep::plan_applied: return "plan-applied";
    case AddStep::filter_created: return "filter-created";
    case AddStep::committed: return "committed";
  }
  return "unknown";
}

namespace {

constexpr int kStoreVersion = 1;

json pending_to_json(const PendingAdd& p) {
  json j{{"containerId", p.container_id},
         {"podIp", p.pod_ip},
         {"planIntent", p.plan_intent},
         {"filterIntent", p.filter_intent}};
  if (p.mark) j["mark"] = textio::hex(p.mark->value());
  if (p.flow) j["flow"] = {{"sessionId", p.flow->session_id}, {"qfi", p.flow->qfi}};
  return j;
}

PendingAdd pending_from_json(const json& j) {
  PendingAdd p;
  p.container_id = j.at("containerId").get<std::string>();
  p.pod_ip = j.at("podIp").get<std::string>();
  p.plan_intent = j.value("planIntent", false);
  p.filter_intent = j.value("filterIntent", false);
  if (j.contains("mark")) p.mark = FwMark(textio::parse_hex32(j.at("mark").get<std::string>()).value_or(0));
  if (j.contains("flow")) {
    p.flow = QosFlowRef{j.at("flow").at("sessionId").get<std::string>(), j.at("flow").at("qfi").get<std::uint32_t>()};
  }
  return p;
}

bool valid_pod_ip(const std::string& ip) {
  unsigned char buf[16];
  const int family = ip.find(':') != std::string::npos ? AF_INET6 : AF_INET;
  return ::inet_pton(family, ip.c_str(), buf) == 1;
}

// Emulator refusals become network rejections; transport trouble keeps its
// own code.
[[noreturn]] void rethrow_as_network_error(const Error& e) {
  switch (e.code()) {
    case Errc::emulator_unreachable:
    case Errc::not_implemented: throw;
    default: throw Error(Errc::network_rejection, e.what());
  }
}

FlowBinding binding_for_pending(const PendingAdd& p) {
  FlowBinding b;
  b.container_id = p.container_id;
  b.pod_ip = p.pod_ip;
  b.mark = p.mark.value_or(FwMark{});
  if (p.flow) {
    b.pdu_session_id = p.flow->session_id;
    b.qfi = p.flow->qfi;
  }
  return b;
}

}  // namespace

// BindingStore

BindingStore::BindingStore(std::filesystem::path persistence_path) : path_(std::move(persistence_path)) {
  if (path_.empty() || !std::filesystem::exists(path_)) return;
  try {
    auto doc = json::parse(textio::read_file(path_));
    if (doc.at("version").get<int>() != kStoreVersion) {
      throw Error(Errc::persistence_failure, path_.string() + ": unsupported store version");
    }
    for (const auto& jb : doc.at("bindings")) {
      StoredBinding sb{binding_from_json(jb.at("binding")), jb.value("filterId", std::string{})};
      bindings_.emplace(sb.binding.container_id, std::move(sb));
    }
    for (const auto& jp : doc.at("pending")) {
      auto p = pending_from_json(jp);
      pending_.emplace(p.container_id, std::move(p));
    }
    if (doc.contains("session") && !doc.at("session").is_null()) {
      session_.emplace(doc["session"].at("radioLinkId").get<std::string>(),
                       doc["session"].at("pduSessionId").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw Error(Errc::persistence_failure, path_.string() + ": " + e.what());
  }
}

std::optional<StoredBinding> BindingStore::find(const std::string& container_id) const {
  std::lock_guard lock(mutex_);
  auto it = bindings_.find(container_id);
  if (it == bindings_.end()) return std::nullopt;
  return it->second;
}

std::vector<StoredBinding> BindingStore::bindings() const {
  std::lock_guard lock(mutex_);
  std::vector<StoredBinding> out;
  for (const auto& [id, b] : bindings_) out.push_back(b);
  return out;
}

std::vector<PendingAdd> BindingStore::pending() const {
  std::lock_guard lock(mutex_);
  std::vector<PendingAdd> out;
  for (const auto& [id, p] : pending_) out.push_back(p);
  return out;
}

std::optional<std::pair<std::string, std::string>> BindingStore::node_session() const {
  std::lock_guard lock(mutex_);
  return session_;
}

void BindingStore::put_pending(const PendingAdd& p) {
  std::lock_guard lock(mutex_);
  auto old = pending_.find(p.container_id);
  std::optional<PendingAdd> previous;
  if (old != pending_.end()) previous = old->second;
  pending_[p.container_id] = p;
  try {
    persist_locked();
  } catch (...) {
    if (previous) pending_[p.container_id] = *previous;
    else pending_.erase(p.container_id);
    throw;
  }
}

void BindingStore::drop_pending(const std::string& container_id) {
  std::lock_guard lock(mutex_);
  if (pending_.erase(container_id) == 0) return;
  persist_locked();
}

void BindingStore::commit(const StoredBinding& b) {
  std::lock_guard lock(mutex_);
  auto pending = pending_.find(b.binding.container_id);
  std::optional<PendingAdd> saved;
  if (pending != pending_.end()) {
    saved = pending->second;
    pending_.erase(pending);
  }
  bindings_[b.binding.container_id] = b;
  try {
    persist_locked();
  } catch (...) {
    bindings_.erase(b.binding.container_id);
    if (saved) pending_[saved->container_id] = *saved;
    throw;
  }
}

void BindingStore::erase(const std::string& container_id) {
  std::lock_guard lock(mutex_);
  if (bindings_.erase(container_id) == 0) return;
  persist_locked();
}

void BindingStore::set_node_session(std::optional<std::pair<std::string, std::string>> ids) {
  std::lock_guard lock(mutex_);
  session_ = std::move(ids);
  persist_locked();
}

std::string BindingStore::dump() const {
  std::lock_guard lock(mutex_);
  std::string out;
  for (const auto& [id, sb] : bindings_) {
    const auto& b = sb.binding;
    out += "binding " + id + " ip " + b.pod_ip + " mark " + textio::hex8(b.mark.value()) + " flow " +
           to_string(b.flow()) + " 5qi " + std::to_string(b.profile.five_qi) + "\n";
  }
  for (const auto& [id, p] : pending_) out += "pending " + id + " " + pending_to_json(p).dump() + "\n";
  return out;
}

void BindingStore::persist_locked() const {
  if (path_.empty()) return;
  json doc{{"version", kStoreVersion}, {"bindings", json::array()}, {"pending", json::array()}, {"session", nullptr}};
  for (const auto& [id, sb] : bindings_) {
    doc["bindings"].push_back({{"binding", binding_to_json(sb.binding)}, {"filterId", sb.emulator_filter_id}});
  }
  for (const auto& [id, p] : pending_) doc["pending"].push_back(pending_to_json(p));
  if (session_) doc["session"] = {{"radioLinkId", session_->first}, {"pduSessionId", session_->second}};
  try {
    textio::atomic_write_file(path_, doc.dump(2) + "\n");
  } catch (const std::exception& e) {
    throw Error(Errc::persistence_failure, e.what());
  }
}

// CheckReport

std::string CheckReport::failures() const {
  std::string out;
  for (const auto& item : items) {
    if (item.present) continue;
    if (!out.empty()) out += "; ";
    out += item.element + " missing";
    if (!item.detail.empty()) out += " (" + item.detail + ")";
  }
  return out;
}

json check_report_to_json(const CheckReport& r) {
  json items = json::array();
  for (const auto& i : r.items) items.push_back({{"element", i.element}, {"present", i.present}, {"detail", i.detail}});
  return {{"pass", r.pass}, {"vacuous", r.vacuous}, {"items", items}};
}

CheckReport check_report_from_json(const json& j) {
  CheckReport r;
  r.pass = j.at("pass").get<bool>();
  r.vacuous = j.value("vacuous", false);
  for (const auto& i : j.at("items")) {
    r.items.push_back({i.at("element").get<std::string>(), i.at("present").get<bool>(), i.value("detail", std::string{})});
  }
  return r;
}

// QosDaemon

QosDaemon::QosDaemon(FwMarkSpace& marks, const ProfileTable& profiles, Backend& backend, EmulatorClient& network,
                     BindingStore& store, DaemonOptions options)
    : marks_(marks), profiles_(profiles), backend_(backend), network_(network), store_(store), options_(std::move(options)) {
  if (!options_.retry.sleep) options_.retry.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  if (options_.retry.attempts < 1) options_.retry.attempts = 1;
}

void QosDaemon::set_step_hook(std::function<void(AddStep, const std::string&)> hook) {
  std::unique_lock txn(txn_mutex_);
  options_.step_hook = std::move(hook);
}

void QosDaemon::step(AddStep s, const std::string& container_id) {
  if (options_.step_hook) options_.step_hook(s, container_id);
}

bool QosDaemon::with_retry(const std::string& what, const std::function<void()>& fn) {
  for (int attempt = 1; attempt <= options_.retry.attempts; ++attempt) {
    try {
      fn();
      return true;
    } catch (const std::exception& e) {
      spdlog::warn("qosd: {} failed (attempt {}/{}): {}", what, attempt, options_.retry.attempts, e.what());
      if (attempt < options_.retry.attempts) options_.retry.sleep(options_.retry.backoff);
    }
  }
  return false;
}

std::pair<std::string, std::string> QosDaemon::ensure_session_locked() {
  auto sessions = network_.pdu_sessions();
  if (auto known = store_.node_session()) {
    for (const auto& s : sessions) {
      if (s.id == known->second) return *known;
    }
  }
  // Adopt what the network already has before creating anything.
  auto links = network_.radio_links();
  std::optional<std::pair<std::string, std::string>> ids;
  for (const auto& l : links) {
    if (!l.up) continue;
    for (const auto& s : sessions) {
      if (s.radio_link_id == l.id) {
        ids.emplace(l.id, s.id);
        break;
      }
    }
    if (!ids) ids.emplace(l.id, network_.create_pdu_session(l.id).id);
    break;
  }
  if (!ids) {
    auto link = network_.create_radio_link();
    ids.emplace(link.id, network_.create_pdu_session(link.id).id);
  }
  store_.set_node_session(ids);
  return *ids;
}

std::uint32_t QosDaemon::next_qfi_locked(const std::string& session_id) {
  std::set<std::uint32_t> used;
  for (const auto& s : network_.pdu_sessions()) {
    if (s.id == session_id) used.insert(s.qfis.begin(), s.qfis.end());
  }
  for (const auto& sb : store_.bindings()) {
    if (sb.binding.pdu_session_id == session_id) used.insert(sb.binding.qfi);
  }
  std::uint32_t qfi = 1;
  while (used.contains(qfi)) ++qfi;
  return qfi;
}

FlowBinding QosDaemon::handle_add(const std::string& container_id, const std::string& pod_ip,
                                  const QosRequirement& req) {
  std::unique_lock txn(txn_mutex_);
  if (container_id.empty()) throw Error(Errc::missing_container_id, "container id is empty");
  if (store_.find(container_id)) throw Error(Errc::duplicate_container, container_id + " already has a binding");
  for (const auto& p : store_.pending()) {
    if (p.container_id == container_id) {
      throw Error(Errc::duplicate_container, container_id + " has an unrecovered ADD in the journal");
    }
  }
  if (!valid_pod_ip(pod_ip)) throw Error(Errc::host_network_unsupported, "'" + pod_ip + "' is not a pod address");
  const FiveQiProfile profile = map_requirement(req, profiles_);
  const std::uint32_t mask = marks_.free_mask();

  PendingAdd pending{container_id, pod_ip, std::nullopt, std::nullopt, false, false};
  store_.put_pending(pending);
  bool committed = false;
  try {
    step(AddStep::begun, container_id);

    // The mark goes into the journal right after the allocator persisted it;
    // recovery also sweeps marks no binding owns for the gap in between.
    FwMark mark = marks_.allocate();
    pending.mark = mark;
    try {
      store_.put_pending(pending);
    } catch (...) {
      marks_.release(mark);
      pending.mark.reset();
      throw;
    }
    step(AddStep::mark_allocated, container_id);

    std::pair<std::string, std::string> ids;
    try {
      ids = ensure_session_locked();
    } catch (const Error& e) {
      rethrow_as_network_error(e);
    }
    step(AddStep::session_ready, container_id);

    const QosFlowRef flow{ids.second, next_qfi_locked(ids.second)};
    pending.flow = flow;
    store_.put_pending(pending);
    QosFlowRequest fr;
    fr.session_id = flow.session_id;
    fr.qfi = flow.qfi;
    fr.five_qi = profile.five_qi;
    fr.delay_ms = profile.packet_delay_budget_ms;
    fr.rate_kbps = req.max_kbps ? req.max_kbps : req.guaranteed_kbps;
    fr.averaging_window_ms = profile.averaging_window_ms;
    try {
      network_.create_qos_flow(fr);
    } catch (const Error& e) {
      rethrow_as_network_error(e);
    }
    step(AddStep::flow_created, container_id);

    FlowBinding binding;
    binding.container_id = container_id;
    binding.pod_ip = pod_ip;
    binding.mark = mark;
    binding.requirement = req;
    binding.profile = profile;
    binding.radio_link_id = ids.first;
    binding.pdu_session_id = flow.session_id;
    binding.qfi = flow.qfi;
    binding.created_at = std::chrono::system_clock::now();

    auto plan = build_plan(binding, mask, options_.phys_if);
    pending.plan_intent = true;
    store_.put_pending(pending);
    apply(plan, backend_);
    step(AddStep::plan_applied, container_id);

    pending.filter_intent = true;
    store_.put_pending(pending);
    MarkFilter filter;
    try {
      filter = network_.create_filter(mark.value(), mask, flow);
    } catch (const Error& e) {
      rethrow_as_network_error(e);
    }
    step(AddStep::filter_created, container_id);

    store_.commit({binding, filter.id});
    committed = true;
    step(AddStep::committed, container_id);
    spdlog::info("qosd: {} bound to {} via mark {} (5QI {})", container_id, to_string(flow), textio::hex(mark.value()),
                 profile.five_qi);
    return binding;
  } catch (const std::exception& e) {
    spdlog::warn("qosd: ADD {} failed: {}; rolling back", container_id, e.what());
    if (committed) {
      try {
        store_.erase(container_id);
        store_.put_pending(pending);
      } catch (const std::exception& inner) {
        spdlog::error("qosd: cannot reopen journal for {}: {}", container_id, inner.what());
      }
    }
    if (!undo_pending_locked(pending)) {
      spdlog::error("qosd: rollback of {} incomplete; left in journal for recovery", container_id);
    }
    throw;
  }
}

bool QosDaemon::undo_pending_locked(const PendingAdd& p) {
  bool ok = true;
  const std::uint32_t mask = marks_.free_mask();
  if (p.filter_intent && p.mark && p.flow) {
    ok &= with_retry("delete flow filter", [&] {
      for (const auto& f : network_.filters()) {
        if (f.match_mark == p.mark->value() && f.match_mask == mask && f.target == *p.flow) {
          network_.delete_filter(f.id, {false, true});
        }
      }
    });
  }
  if (p.plan_intent && p.mark && p.flow) {
    ok &= with_retry("revert enforcement", [&] {
      auto plan = build_plan(binding_for_pending(p), mask, options_.phys_if);
      for (auto it = plan.steps.rbegin(); it != plan.steps.rend(); ++it) backend_.remove(it->spec);
    });
  }
  if (p.flow) {
    ok &= with_retry("delete QoS flow", [&] { network_.delete_qos_flow(*p.flow, {true, true}); });
  }
  if (p.mark) {
    ok &= with_retry("release mark", [&] { marks_.release(*p.mark); });
  }
  if (ok) {
    ok = with_retry("clear journal", [&] { store_.drop_pending(p.container_id); });
  }
  return ok;
}

void QosDaemon::handle_del(const std::string& container_id) {
  std::unique_lock txn(txn_mutex_);
  auto stored = store_.find(container_id);
  if (!stored) {
    for (const auto& p : store_.pending()) {
      if (p.container_id == container_id && !undo_pending_locked(p)) {
        throw Error(Errc::backend_failure, "could not undo the journaled ADD of " + container_id);
      }
    }
    return;
  }
  const auto& b = stored->binding;
  const std::uint32_t mask = marks_.free_mask();
  bool ok = true;

  ok &= with_retry("delete flow filter", [&] {
    try {
      network_.delete_filter(stored->emulator_filter_id, {});
    } catch (const Error& e) {
      if (e.code() != Errc::not_found) throw;
      spdlog::warn("qosd: drift: flow filter {} of {} already gone", stored->emulator_filter_id, container_id);
    }
  });
  ok &= with_retry("revert enforcement", [&] {
    auto plan = build_plan(b, mask, options_.phys_if);
    for (auto it = plan.steps.rbegin(); it != plan.steps.rend(); ++it) {
      if (!backend_.remove(it->spec)) spdlog::warn("qosd: drift: {} already gone", dump_spec(it->spec));
    }
  });
  ok &= with_retry("delete QoS flow", [&] {
    try {
      network_.delete_qos_flow(b.flow(), {true, false});
    } catch (const Error& e) {
      if (e.code() != Errc::not_found) throw;
      spdlog::warn("qosd: drift: QoS flow {} of {} already gone", to_string(b.flow()), container_id);
    }
  });

  // The mark and the record go regardless: a leaked mark is worse than a
  // leaked flow.
  try {
    marks_.release(b.mark);
  } catch (const Error& e) {
    ok = false;
    spdlog::error("qosd: mark {} released in memory but not persisted: {}", textio::hex(b.mark.value()), e.what());
  }
  store_.erase(container_id);

  if (options_.teardown_session_on_empty && store_.bindings().empty()) {
    if (auto ids = store_.node_session()) {
      ok &= with_retry("tear down PDU session", [&] {
        network_.delete_pdu_session(ids->second, {true, true});
        network_.delete_radio_link(ids->first, {true, true});
      });
      store_.set_node_session(std::nullopt);
    }
  }
  if (!ok) throw Error(Errc::backend_failure, "teardown of " + container_id + " incomplete; drift logged");
}

CheckReport QosDaemon::handle_check(const std::string& container_id) {
  std::shared_lock txn(txn_mutex_);
  CheckReport report;
  auto stored = store_.find(container_id);
  if (!stored) {
    report.vacuous = true;
    return report;
  }
  const auto& b = stored->binding;
  const std::uint32_t mask = marks_.free_mask();
  report.items.push_back({"binding", true, ""});
  report.items.push_back({"mark-allocation", marks_.is_allocated(b.mark), textio::hex(b.mark.value())});

  auto plan = build_plan(b, mask, options_.phys_if);
  report.items.push_back({"mark-rule", backend_.contains(plan.steps[0].spec), dump_spec(plan.steps[0].spec)});
  report.items.push_back({"fw-filter", backend_.contains(plan.steps[1].spec), dump_spec(plan.steps[1].spec)});

  CheckItem flow_item{"qos-flow", false, to_string(b.flow())};
  CheckItem filter_item{"flow-filter", false, stored->emulator_filter_id};
  try {
    for (const auto& f : network_.qos_flows()) {
      if (f.ref() == b.flow() && f.five_qi == b.profile.five_qi) flow_item.present = true;
    }
    for (const auto& f : network_.filters()) {
      if (f.id == stored->emulator_filter_id && f.match_mark == b.mark.value() && f.match_mask == mask &&
          f.target == b.flow()) {
        filter_item.present = true;
      }
    }
  } catch (const Error& e) {
    flow_item.detail += std::string(": ") + e.what();
    filter_item.detail += std::string(": ") + e.what();
  }
  report.items.push_back(flow_item);
  report.items.push_back(filter_item);
  report.pass = std::all_of(report.items.begin(), report.items.end(), [](const CheckItem& i) { return i.present; });
  return report;
}

std::string QosDaemon::snapshot_state() {
  std::shared_lock txn(txn_mutex_);
  std::string out = "# store\n" + store_.dump();
  out += "# allocator\n" + marks_.serialize();
  out += "# backend\n" + backend_.dump();
  out += "# emulator\n";
  try {
    out += network_.dump_tree();
  } catch (const Error& e) {
    out += std::string("unavailable: ") + std::string(to_string(e.code())) + "\n";
  }
  return out;
}

std::vector<FlowBinding> QosDaemon::bindings() const {
  std::vector<FlowBinding> out;
  for (const auto& sb : store_.bindings()) out.push_back(sb.binding);
  return out;
}

RecoveryReport QosDaemon::recover() {
  std::unique_lock txn(txn_mutex_);
  RecoveryReport report;
  for (const auto& p : store_.pending()) {
    if (store_.find(p.container_id)) {
      store_.drop_pending(p.container_id);
      report.committed.push_back(p.container_id);
      continue;
    }
    if (undo_pending_locked(p)) {
      report.rolled_back.push_back(p.container_id);
    } else {
      spdlog::error("qosd: recovery could not undo the ADD of {}", p.container_id);
    }
  }
  std::set<std::uint32_t> owned;
  for (const auto& sb : store_.bindings()) owned.insert(sb.binding.mark.value());
  for (const auto& p : store_.pending()) {
    if (p.mark) owned.insert(p.mark->value());
  }
  for (auto value : marks_.allocated()) {
    if (owned.contains(value)) continue;
    marks_.release(FwMark(value));
    report.orphan_marks_released.push_back(value);
  }
  if (!report.rolled_back.empty() || !report.orphan_marks_released.empty()) {
    spdlog::info("qosd: recovery rolled back {} ADD(s), released {} orphan mark(s)", report.rolled_back.size(),
                 report.orphan_marks_released.size());
  }
  return report;
}

// DaemonConfig

DaemonConfig DaemonConfig::from_json(const json& j) {
  DaemonConfig c;
  c.emulator_url = j.value("emulatorUrl", c.emulator_url);
  c.registry_file = j.value("registryFile", c.registry_file.string());
  c.profile_table = j.value("profileTable", c.profile_table.string());
  c.phys_if = j.value("physIf", c.phys_if);
  c.socket_path = j.value("socketPath", c.socket_path.string());
  c.state_dir = j.value("stateDir", c.state_dir.string());
  c.backend = j.value("backend", c.backend);
  c.control_path = j.value("controlPath", c.control_path);
  c.teardown_session_on_empty = j.value("teardownSessionOnEmpty", c.teardown_session_on_empty);
  return c;
}

DaemonConfig DaemonConfig::load(const std::filesystem::path& config_file,
                                const std::map<std::string, std::string>& env) {
  DaemonConfig c;
  if (!config_file.empty()) {
    try {
      c = from_json(json::parse(textio::read_file(config_file)));
    } catch (const json::exception& e) {
      throw Error(Errc::malformed_config, config_file.string() + ": " + e.what());
    } catch (const std::runtime_error& e) {
      throw Error(Errc::malformed_config, e.what());
    }
  }
  auto get = [&](const char* key) -> const std::string* {
    auto it = env.find(key);
    return it == env.end() ? nullptr : &it->second;
  };
  if (auto v = get("QOSD_EMULATOR_URL")) c.emulator_url = *v;
  if (auto v = get("QOSD_REGISTRY_FILE")) c.registry_file = *v;
  if (auto v = get("QOSD_PROFILE_TABLE")) c.profile_table = *v;
  if (auto v = get("QOSD_PHYS_IF")) c.phys_if = *v;
  if (auto v = get("QOSD_SOCKET_PATH")) c.socket_path = *v;
  if (auto v = get("QOSD_STATE_DIR")) c.state_dir = *v;
  if (auto v = get("QOSD_BACKEND")) c.backend = *v;
  if (auto v = get("QOSD_CONTROL_PATH")) c.control_path = *v;
  if (auto v = get("QOSD_TEARDOWN_SESSION_ON_EMPTY")) c.teardown_session_on_empty = (*v == "true" || *v == "1");
  if (c.backend != "sim" && c.backend != "shell") throw Error(Errc::malformed_config, "backend must be sim or shell");
  if (c.control_path != "nef" && c.control_path != "amf") {
    throw Error(Errc::malformed_config, "controlPath must be nef or amf");
  }
  return c;
}

// DaemonRuntime

DaemonRuntime::DaemonRuntime(const DaemonConfig& config, DaemonOptions options) {
  if (config.control_path == "amf") {
    network_ = std::make_unique<AmfClient>();
  } else if (config.emulator_url.empty()) {
    embedded_ = std::make_unique<Emulator>();
    network_ = std::make_unique<LocalEmulatorClient>(*embedded_);
  } else {
    network_ = std::make_unique<HttpEmulatorClient>(config.emulator_url);
  }
  if (config.backend == "shell") backend_ = std::make_unique<ShellBackend>();
  else backend_ = std::make_unique<SimBackend>();

  std::string registry_doc(default_registry_document());
  if (!config.registry_file.empty()) registry_doc = textio::read_file(config.registry_file);
  std::string profile_doc(default_profile_table_document());
  if (!config.profile_table.empty()) profile_doc = textio::read_file(config.profile_table);

  std::filesystem::path mark_state, store_state;
  if (!config.state_dir.empty()) {
    std::filesystem::create_directories(config.state_dir);
    mark_state = config.state_dir / "fwmark.state";
    store_state = config.state_dir / "bindings.json";
  }
  marks_ = std::make_unique<FwMarkSpace>(load_registry(registry_doc), mark_state);
  profiles_ = std::make_unique<ProfileTable>(load_profile_table(profile_doc));
  store_ = std::make_unique<BindingStore>(store_state);
  options.phys_if = config.phys_if;
  options.teardown_session_on_empty = config.teardown_session_on_empty;
  daemon_ = std::make_unique<QosDaemon>(*marks_, *profiles_, *backend_, *network_, *store_, std::move(options));
}

DaemonRuntime::~DaemonRuntime() = default;

}  // namespace qosbridge
