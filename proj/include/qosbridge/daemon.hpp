#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qosbridge/binding.hpp"
#include "qosbridge/emulator.hpp"
#include "qosbridge/enforcement.hpp"
#include "qosbridge/fwmark.hpp"
#include "qosbridge/qos.hpp"

namespace qosbridge {

// Step boundaries of the ADD pipeline, in execution order. The step hook
// fires after each one has completed and been journaled.
enum class AddStep {
  begun,  // journal entry written
  mark_allocated,
  session_ready,  // radio link + PDU session exist
  flow_created,
  plan_applied,
  filter_created,
  committed,      // binding durable, journal entry cleared
};

inline constexpr AddStep kAllAddSteps[] = {AddStep::begun,        AddStep::mark_allocated, AddStep::session_ready,
                                           AddStep::flow_created, AddStep::plan_applied,   AddStep::filter_created,
                                           AddStep::committed};

std::string_view to_string(AddStep step) noexcept;

// An ADD that started but has not committed. Each resource field is filled
// in before the corresponding external call, so recovery knows what may
// exist.
struct PendingAdd {
  std::string container_id;
  std::string pod_ip;
  std::optional<FwMark> mark;
  std::optional<QosFlowRef> flow;
  bool plan_intent = false;
  bool filter_intent = false;
};

struct StoredBinding {
  FlowBinding binding;
  std::string emulator_filter_id;
};

// Committed bindings plus the journal of in-flight ADDs, persisted as one
// JSON document replaced atomically on every change.
class BindingStore {
 public:
  explicit BindingStore(std::filesystem::path persistence_path = {});

  BindingStore(const BindingStore&) = delete;
  BindingStore& operator=(const BindingStore&) = delete;

  std::optional<StoredBinding> find(const std::string& container_id) const;
  std::vector<StoredBinding> bindings() const;
  std::vector<PendingAdd> pending() const;
  std::optional<std::pair<std::string, std::string>> node_session() const;  // (link, session)

  void put_pending(const PendingAdd& p);
  void drop_pending(const std::string& container_id);
  void commit(const StoredBinding& b);  // also clears the journal entry
  void erase(const std::string& container_id);
  void set_node_session(std::optional<std::pair<std::string, std::string>> ids);

  // Canonical, timestamp-free rendering of bindings and journal.
  std::string dump() const;

 private:
  void persist_locked() const;

  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::map<std::string, StoredBinding> bindings_;
  std::map<std::string, PendingAdd> pending_;
  std::optional<std::pair<std::string, std::string>> session_;
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds backoff{100};
  std::function<void(std::chrono::milliseconds)> sleep;  // defaults to std::this_thread::sleep_for
};

struct CheckItem {
  std::string element;  // binding, mark-allocation, mark-rule, fw-filter, qos-flow, flow-filter
  bool present = false;
  std::string detail;
};

struct CheckReport {
  bool pass = true;
  bool vacuous = false;  // no binding and nothing expected
  std::vector<CheckItem> items;

  // "qos-flow missing; fw-filter missing"
  std::string failures() const;
};

nlohmann::json check_report_to_json(const CheckReport& r);
CheckReport check_report_from_json(const nlohmann::json& j);

struct RecoveryReport {
  std::vector<std::string> rolled_back;
  std::vector<std::string> committed;
  std::vector<std::uint32_t> orphan_marks_released;
};

struct DaemonOptions {
  std::string phys_if = "eth0";
  bool teardown_session_on_empty = false;
  RetryPolicy retry;
  // Called after each AddStep. Throwing an Error simulates a failure at that
  // point (the pipeline rolls back). Throwing anything not derived from
  // std::exception simulates process death: nothing is rolled back and the
  // exception propagates unchanged.
  std::function<void(AddStep, const std::string& container_id)> step_hook;
};

// Coordinates the allocator, the store, the enforcement backend and the
// network. Mutating requests run as serialized transactions; check and
// snapshot run concurrently with each other.
class QosDaemon {
 public:
  QosDaemon(FwMarkSpace& marks, const ProfileTable& profiles, Backend& backend, EmulatorClient& network,
            BindingStore& store, DaemonOptions options = {});

  QosDaemon(const QosDaemon&) = delete;
  QosDaemon& operator=(const QosDaemon&) = delete;

  // Throws duplicate-container, invalid-requirement, unknown-five-qi,
  // qos-unmappable, allocation-exhausted, persistence-failure,
  // network-rejection, emulator-unreachable, backend-failure,
  // host-network-unsupported. Any failure leaves no trace.
  FlowBinding handle_add(const std::string& container_id, const std::string& pod_ip, const QosRequirement& req);

  // Unknown ids are a no-op. The binding and its mark are always gone when
  // this returns; if some teardown step kept failing after retries,
  // Errc::backend_failure is thrown afterwards to report the drift.
  void handle_del(const std::string& container_id);

  CheckReport handle_check(const std::string& container_id);

  // Canonical dump of store, allocator, backend and emulator tree.
  std::string snapshot_state();

  std::vector<FlowBinding> bindings() const;

  // Finishes or undoes every journaled ADD left by a crash, then releases
  // marks no committed binding owns. Call once at startup.
  RecoveryReport recover();

  void set_step_hook(std::function<void(AddStep, const std::string&)> hook);

 private:
  std::pair<std::string, std::string> ensure_session_locked();
  std::uint32_t next_qfi_locked(const std::string& session_id);
  // Undoes whatever a journaled ADD may have created. Returns false if some
  // step kept failing; the journal entry is kept for the next recovery then.
  bool undo_pending_locked(const PendingAdd& pending);
  bool with_retry(const std::string& what, const std::function<void()>& fn);
  void step(AddStep s, const std::string& container_id);

  FwMarkSpace& marks_;
  const ProfileTable& profiles_;
  Backend& backend_;
  EmulatorClient& network_;
  BindingStore& store_;
  DaemonOptions options_;

  std::shared_mutex txn_mutex_;
};

// Daemon process configuration. Read from one JSON document; each key can
// be overridden by an environment variable:
//
//   emulatorUrl             QOSD_EMULATOR_URL      ("" = embedded emulator)
//   registryFile            QOSD_REGISTRY_FILE     ("" = built-in registry)
//   profileTable            QOSD_PROFILE_TABLE     ("" = built-in table)
//   physIf                  QOSD_PHYS_IF
//   socketPath              QOSD_SOCKET_PATH
//   stateDir                QOSD_STATE_DIR         ("" = no persistence)
//   backend                 QOSD_BACKEND           (sim | shell)
//   controlPath             QOSD_CONTROL_PATH      (nef | amf)
//   teardownSessionOnEmpty  QOSD_TEARDOWN_SESSION_ON_EMPTY (true | false)
struct DaemonConfig {
  std::string emulator_url;
  std::filesystem::path registry_file;
  std::filesystem::path profile_table;
  std::string phys_if = "eth0";
  std::filesystem::path socket_path = "/run/qosd/qosd.sock";
  std::filesystem::path state_dir;
  std::string backend = "sim";
  std::string control_path = "nef";
  bool teardown_session_on_empty = false;

  static DaemonConfig from_json(const nlohmann::json& j);
  // `config_file` may be empty (defaults + environment only).
  static DaemonConfig load(const std::filesystem::path& config_file, const std::map<std::string, std::string>& env);
};

// Owns every collaborator a daemon needs, built from a DaemonConfig.
class DaemonRuntime {
 public:
  explicit DaemonRuntime(const DaemonConfig& config, DaemonOptions options = {});
  ~DaemonRuntime();

  QosDaemon& daemon() { return *daemon_; }
  Emulator* embedded_emulator() { return embedded_.get(); }
  Backend& backend() { return *backend_; }
  EmulatorClient& network() { return *network_; }
  FwMarkSpace& marks() { return *marks_; }

 private:
  std::unique_ptr<Emulator> embedded_;
  std::unique_ptr<EmulatorClient> network_;
  std::unique_ptr<Backend> backend_;
  std::unique_ptr<FwMarkSpace> marks_;
  std::unique_ptr<ProfileTable> profiles_;
  std::unique_ptr<BindingStore> store_;
  std::unique_ptr<QosDaemon> daemon_;
};

}  // namespace qosbridge
