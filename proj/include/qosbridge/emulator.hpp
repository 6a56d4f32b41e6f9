#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qosbridge/binding.hpp"

namespace qosbridge {

// Virtual time used by the emulator and the packet simulation.
using SimTime = std::chrono::nanoseconds;

// Rate-limited flows without an explicit averaging window use this one.
inline constexpr std::uint32_t kDefaultAveragingWindowMs = 2000;

struct RadioLink {
  std::string id;
  bool up = true;
};

struct PduSession {
  std::string id;
  std::string radio_link_id;
  std::vector<std::uint32_t> qfis;  // sorted
};

struct QosFlowRequest {
  std::string session_id;
  std::uint32_t five_qi = 0;
  double delay_ms = 0.0;
  std::optional<std::uint64_t> rate_kbps;
  std::optional<std::uint32_t> averaging_window_ms;
  std::optional<std::uint32_t> qfi;  // server picks the lowest free QFI when absent
};

struct QosFlow {
  std::string session_id;
  std::uint32_t qfi = 0;
  std::uint32_t five_qi = 0;
  SimTime delay{0};
  std::optional<std::uint64_t> rate_kbps;
  std::uint32_t averaging_window_ms = kDefaultAveragingWindowMs;
  std::uint32_t class_minor = 0;  // tree class 1:<minor>

  QosFlowRef ref() const { return {session_id, qfi}; }
  double delay_ms() const { return std::chrono::duration<double, std::milli>(delay).count(); }
};

struct MarkFilter {
  std::string id;
  std::uint32_t match_mark = 0;
  std::uint32_t match_mask = 0;
  QosFlowRef target;
};

struct DeleteOptions {
  bool cascade = false;     // also delete dependent children
  bool idempotent = false;  // a missing id is success instead of not-found
};

struct Classification {
  std::optional<QosFlowRef> flow;  // empty: default class

  bool is_default() const { return !flow.has_value(); }
};

struct TransmitRequest {
  SimTime send_time{0};
  std::size_t size_bytes = 0;
  std::optional<std::uint32_t> mark;     // classified when `flow` is empty
  std::optional<QosFlowRef> flow;
};

struct Delivery {
  std::optional<QosFlowRef> flow;  // empty: default class
  SimTime send_time{0};
  SimTime arrival_time{0};
  std::size_t size_bytes = 0;

  SimTime latency() const { return arrival_time - send_time; }
};

// Emulated 5G exposure API backed by a qdisc/class/filter tree.
//
// Each QoS flow owns one class under the root qdisc carrying a fixed delay
// and an optional token-bucket rate (bucket = rate x averaging window). The
// bucket is empty when a flow sees its first packet. Filters are evaluated
// in insertion order; unmatched traffic goes to the default class, which
// adds no delay. All times are virtual.
class Emulator {
 public:
  RadioLink create_radio_link();
  void set_radio_link_state(const std::string& id, bool up);
  void delete_radio_link(const std::string& id, DeleteOptions opts = {});

  PduSession create_pdu_session(const std::string& radio_link_id);
  void delete_pdu_session(const std::string& id, DeleteOptions opts = {});

  QosFlow create_qos_flow(const QosFlowRequest& req);
  void delete_qos_flow(const QosFlowRef& ref, DeleteOptions opts = {});

  MarkFilter create_filter(std::uint32_t mark, std::uint32_t mask, const QosFlowRef& target);
  void delete_filter(const std::string& id, DeleteOptions opts = {});

  std::vector<RadioLink> radio_links() const;
  std::vector<PduSession> pdu_sessions() const;
  std::vector<QosFlow> qos_flows() const;
  std::vector<MarkFilter> filters() const;

  Classification classify(std::uint32_t mark) const;

  // Throws Errc::not_found if the request names a flow that does not exist.
  Delivery transmit(const TransmitRequest& req);

  // Sorted, deterministic rendering of the tree.
  std::string dump_tree() const;

 private:
  struct Bucket {
    std::mutex mutex;
    bool primed = false;
    __int128 credit = 0;  // in 1e-6 bit units
    SimTime last_update{0};
    SimTime last_departure{0};
  };
  struct FlowEntry {
    QosFlow flow;
    std::unique_ptr<Bucket> bucket = std::make_unique<Bucket>();
  };

  SimTime depart_locked(FlowEntry& entry, SimTime send_time, std::size_t size_bytes);
  bool flow_has_filters_locked(const QosFlowRef& ref) const;

  mutable std::shared_mutex mutex_;
  std::map<std::string, RadioLink> links_;
  std::map<std::string, PduSession> sessions_;
  std::map<QosFlowRef, FlowEntry> flows_;
  std::vector<MarkFilter> filters_;
  std::uint64_t next_link_ = 1;
  std::uint64_t next_session_ = 1;
  std::uint64_t next_filter_ = 1;
};

// The control path the daemon uses to reach the network.
class EmulatorClient {
 public:
  virtual ~EmulatorClient() = default;

  virtual RadioLink create_radio_link() = 0;
  virtual void delete_radio_link(const std::string& id, DeleteOptions opts) = 0;
  virtual PduSession create_pdu_session(const std::string& radio_link_id) = 0;
  virtual void delete_pdu_session(const std::string& id, DeleteOptions opts) = 0;
  virtual QosFlow create_qos_flow(const QosFlowRequest& req) = 0;
  virtual void delete_qos_flow(const QosFlowRef& ref, DeleteOptions opts) = 0;
  virtual MarkFilter create_filter(std::uint32_t mark, std::uint32_t mask, const QosFlowRef& target) = 0;
  virtual void delete_filter(const std::string& id, DeleteOptions opts) = 0;

  virtual std::vector<RadioLink> radio_links() = 0;
  virtual std::vector<PduSession> pdu_sessions() = 0;
  virtual std::vector<QosFlow> qos_flows() = 0;
  virtual std::vector<MarkFilter> filters() = 0;

  virtual Classification classify(std::uint32_t mark) = 0;
  virtual Delivery transmit(const TransmitRequest& req) = 0;
  virtual std::string dump_tree() = 0;
};

// In-process client bound to an Emulator instance.
class LocalEmulatorClient : public EmulatorClient {
 public:
  explicit LocalEmulatorClient(Emulator& emulator) : emu_(emulator) {}

  RadioLink create_radio_link() override { return emu_.create_radio_link(); }
  void delete_radio_link(const std::string& id, DeleteOptions opts) override { emu_.delete_radio_link(id, opts); }
  PduSession create_pdu_session(const std::string& link) override { return emu_.create_pdu_session(link); }
  void delete_pdu_session(const std::string& id, DeleteOptions opts) override { emu_.delete_pdu_session(id, opts); }
  QosFlow create_qos_flow(const QosFlowRequest& req) override { return emu_.create_qos_flow(req); }
  void delete_qos_flow(const QosFlowRef& ref, DeleteOptions opts) override { emu_.delete_qos_flow(ref, opts); }
  MarkFilter create_filter(std::uint32_t mark, std::uint32_t mask, const QosFlowRef& target) override {
    return emu_.create_filter(mark, mask, target);
  }
  void delete_filter(const std::string& id, DeleteOptions opts) override { emu_.delete_filter(id, opts); }
  std::vector<RadioLink> radio_links() override { return emu_.radio_links(); }
  std::vector<PduSession> pdu_sessions() override { return emu_.pdu_sessions(); }
  std::vector<QosFlow> qos_flows() override { return emu_.qos_flows(); }
  std::vector<MarkFilter> filters() override { return emu_.filters(); }
  Classification classify(std::uint32_t mark) override { return emu_.classify(mark); }
  Delivery transmit(const TransmitRequest& req) override { return emu_.transmit(req); }
  std::string dump_tree() override { return emu_.dump_tree(); }

 private:
  Emulator& emu_;
};

// Control-plane (AMF) path. QoS modification through the AMF is not
// modelled; every call throws Errc::not_implemented.
class AmfClient : public EmulatorClient {
 public:
  RadioLink create_radio_link() override;
  void delete_radio_link(const std::string&, DeleteOptions) override;
  PduSession create_pdu_session(const std::string&) override;
  void delete_pdu_session(const std::string&, DeleteOptions) override;
  QosFlow create_qos_flow(const QosFlowRequest&) override;
  void delete_qos_flow(const QosFlowRef&, DeleteOptions) override;
  MarkFilter create_filter(std::uint32_t, std::uint32_t, const QosFlowRef&) override;
  void delete_filter(const std::string&, DeleteOptions) override;
  std::vector<RadioLink> radio_links() override;
  std::vector<PduSession> pdu_sessions() override;
  std::vector<QosFlow> qos_flows() override;
  std::vector<MarkFilter> filters() override;
  Classification classify(std::uint32_t) override;
  Delivery transmit(const TransmitRequest&) override;
  std::string dump_tree() override;
};

// JSON bodies shared by the REST server and client.
nlohmann::json to_json(const RadioLink& v);
nlohmann::json to_json(const PduSession& v);
nlohmann::json to_json(const QosFlow& v);
nlohmann::json to_json(const MarkFilter& v);
nlohmann::json to_json(const Delivery& v);
nlohmann::json to_json(const QosFlowRequest& v);
nlohmann::json to_json(const TransmitRequest& v);
RadioLink radio_link_from_json(const nlohmann::json& j);
PduSession pdu_session_from_json(const nlohmann::json& j);
QosFlow qos_flow_from_json(const nlohmann::json& j);
MarkFilter mark_filter_from_json(const nlohmann::json& j);
Delivery delivery_from_json(const nlohmann::json& j);
QosFlowRequest qos_flow_request_from_json(const nlohmann::json& j);
TransmitRequest transmit_request_from_json(const nlohmann::json& j);

// Renders a virtual duration in milliseconds without trailing zeros ("2",
// "0.5", "10.000001").
std::string format_ms(SimTime t);

}  // namespace qosbridge
