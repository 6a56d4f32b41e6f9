#include "qosbridge/emulator_http.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <mutex>

#include "qosbridge/error.hpp"
#include "qosbridge/textio.hpp"

namespace qosbridge {

namespace {

using nlohmann::json;

int status_for(Errc code) {
  switch (code) {
    case Errc::not_found: return 404;
    case Errc::conflict: return 409;
    case Errc::dependency_violation: return 422;
    case Errc::not_implemented: return 501;
    default: return 400;
  }
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, Errc code, const std::string& msg) {
  send_json(res, {{"error", {{"code", std::string(to_string(code))}, {"message", msg}}}}, status_for(code));
}

DeleteOptions delete_options(const httplib::Request& req) {
  auto flag = [&](const char* name) {
    if (!req.has_param(name)) return false;
    auto v = req.get_param_value(name);
    return v == "1" || v == "true";
  };
  return {flag("cascade"), flag("idempotent")};
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw Error(Errc::bad_request, std::string("invalid JSON body: ") + e.what());
  }
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send_error(res, e.code(), e.what());
    } catch (const json::exception& e) {
      send_error(res, Errc::bad_request, e.what());
    } catch (const std::exception& e) {
      send_error(res, Errc::bad_request, e.what());
    }
  };
}

template <typename T>
json to_json_array(const std::vector<T>& items) {
  json arr = json::array();
  for (const auto& item : items) arr.push_back(to_json(item));
  return arr;
}

}  // namespace

EmulatorServer::EmulatorServer(Emulator& emulator, Options options)
    : emu_(emulator), options_(options), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

EmulatorServer::~EmulatorServer() { stop(); }

void EmulatorServer::install_routes() {
  auto& s = *server_;

  s.Get("/healthz", guarded([](const auto&, auto& res) { send_json(res, {{"status", "ok"}}); }));
  s.Get("/tree", guarded([this](const auto&, auto& res) { res.set_content(emu_.dump_tree(), "text/plain"); }));

  s.Post("/radio-links", guarded([this](const auto&, auto& res) { send_json(res, to_json(emu_.create_radio_link()), 201); }));
  s.Get("/radio-links", guarded([this](const auto&, auto& res) { send_json(res, to_json_array(emu_.radio_links())); }));
  s.Put(R"(/radio-links/([^/]+))", guarded([this](const httplib::Request& req, auto& res) {
          auto body = parse_body(req);
          auto state = body.value("state", std::string("up"));
          if (state != "up" && state != "down") throw Error(Errc::bad_request, "state must be up or down");
          emu_.set_radio_link_state(req.matches[1], state == "up");
          send_json(res, {{"id", std::string(req.matches[1])}, {"state", state}});
        }));
  s.Delete(R"(/radio-links/([^/]+))", guarded([this](const httplib::Request& req, auto& res) {
             emu_.delete_radio_link(req.matches[1], delete_options(req));
             res.status = 204;
           }));

  s.Post("/pdu-sessions", guarded([this](const httplib::Request& req, auto& res) {
           auto body = parse_body(req);
           send_json(res, to_json(emu_.create_pdu_session(body.at("radio_link_id").get<std::string>())), 201);
         }));
  s.Get("/pdu-sessions", guarded([this](const auto&, auto& res) { send_json(res, to_json_array(emu_.pdu_sessions())); }));
  s.Delete(R"(/pdu-sessions/([^/]+))", guarded([this](const httplib::Request& req, auto& res) {
             emu_.delete_pdu_session(req.matches[1], delete_options(req));
             res.status = 204;
           }));

  s.Post("/qos-flows", guarded([this](const httplib::Request& req, auto& res) {
           send_json(res, to_json(emu_.create_qos_flow(qos_flow_request_from_json(parse_body(req)))), 201);
         }));
  s.Get("/qos-flows", guarded([this](const auto&, auto& res) { send_json(res, to_json_array(emu_.qos_flows())); }));
  s.Delete(R"(/qos-flows/([^/]+)/(\d+))", guarded([this](const httplib::Request& req, auto& res) {
             QosFlowRef ref{req.matches[1], static_cast<std::uint32_t>(std::stoul(req.matches[2]))};
             emu_.delete_qos_flow(ref, delete_options(req));
             res.status = 204;
           }));

  s.Post("/filters", guarded([this](const httplib::Request& req, auto& res) {
           auto body = parse_body(req);
           body["id"] = "";
           auto f = mark_filter_from_json(body);
           send_json(res, to_json(emu_.create_filter(f.match_mark, f.match_mask, f.target)), 201);
         }));
  s.Get("/filters", guarded([this](const auto&, auto& res) { send_json(res, to_json_array(emu_.filters())); }));
  s.Delete(R"(/filters/([^/]+))", guarded([this](const httplib::Request& req, auto& res) {
             emu_.delete_filter(req.matches[1], delete_options(req));
             res.status = 204;
           }));

  s.Post("/classify", guarded([this](const httplib::Request& req, auto& res) {
           auto t = transmit_request_from_json(parse_body(req));
           if (!t.mark) throw Error(Errc::bad_request, "mark is required");
           auto c = emu_.classify(*t.mark);
           json out{{"default", c.is_default()}};
           if (c.flow) {
             out["session_id"] = c.flow->session_id;
             out["qfi"] = c.flow->qfi;
           }
           send_json(res, out);
         }));
  s.Post("/transmit", guarded([this](const httplib::Request& req, auto& res) {
           auto d = emu_.transmit(transmit_request_from_json(parse_body(req)));
           if (options_.wall_clock) std::this_thread::sleep_for(d.latency());
           send_json(res, to_json(d));
         }));
}

int EmulatorServer::start(const std::string& host, int port) {
  port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (port_ < 0) throw std::runtime_error("cannot bind emulator to " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

bool EmulatorServer::listen(const std::string& host, int port) {
  port_ = port;
  return server_->listen(host, port);
}

void EmulatorServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

// HttpEmulatorClient

namespace {

[[noreturn]] void raise_from(const httplib::Result& r, const std::string& what) {
  if (!r) throw Error(Errc::emulator_unreachable, what + ": " + httplib::to_string(r.error()));
  Errc code = Errc::bad_request;
  std::string msg = r->body;
  try {
    auto body = json::parse(r->body);
    code = errc_from_string(body.at("error").at("code").get<std::string>());
    msg = body.at("error").value("message", msg);
  } catch (const json::exception&) {
  }
  throw Error(code, what + ": " + msg);
}

std::string query(DeleteOptions opts) {
  std::string q;
  if (opts.cascade) q += "cascade=1";
  if (opts.idempotent) q += (q.empty() ? "" : "&") + std::string("idempotent=1");
  return q.empty() ? q : "?" + q;
}

}  // namespace

HttpEmulatorClient::HttpEmulatorClient(const std::string& base_url)
    : base_url_(base_url), client_(std::make_unique<httplib::Client>(base_url)) {
  client_->set_connection_timeout(2);
  client_->set_read_timeout(10);
}

HttpEmulatorClient::~HttpEmulatorClient() = default;

#define QB_CALL(expr, what, ok_status)                              \
  httplib::Result r;                                                \
  {                                                                 \
    std::lock_guard lock(mutex_);              \
    r = (expr);                                                     \
  }                                                                 \
  if (!r || r->status != (ok_status)) raise_from(r, what)

RadioLink HttpEmulatorClient::create_radio_link() {
  QB_CALL(client_->Post("/radio-links", "{}", "application/json"), "create radio link", 201);
  return radio_link_from_json(json::parse(r->body));
}

void HttpEmulatorClient::delete_radio_link(const std::string& id, DeleteOptions opts) {
  QB_CALL(client_->Delete("/radio-links/" + id + query(opts)), "delete radio link " + id, 204);
}

PduSession HttpEmulatorClient::create_pdu_session(const std::string& radio_link_id) {
  json body{{"radio_link_id", radio_link_id}};
  QB_CALL(client_->Post("/pdu-sessions", body.dump(), "application/json"), "create PDU session", 201);
  return pdu_session_from_json(json::parse(r->body));
}

void HttpEmulatorClient::delete_pdu_session(const std::string& id, DeleteOptions opts) {
  QB_CALL(client_->Delete("/pdu-sessions/" + id + query(opts)), "delete PDU session " + id, 204);
}

QosFlow HttpEmulatorClient::create_qos_flow(const QosFlowRequest& req) {
  QB_CALL(client_->Post("/qos-flows", to_json(req).dump(), "application/json"), "create QoS flow", 201);
  return qos_flow_from_json(json::parse(r->body));
}

void HttpEmulatorClient::delete_qos_flow(const QosFlowRef& ref, DeleteOptions opts) {
  QB_CALL(client_->Delete("/qos-flows/" + ref.session_id + "/" + std::to_string(ref.qfi) + query(opts)),
          "delete QoS flow " + to_string(ref), 204);
}

MarkFilter HttpEmulatorClient::create_filter(std::uint32_t mark, std::uint32_t mask, const QosFlowRef& target) {
  json body{{"mark", textio::hex(mark)}, {"mask", textio::hex(mask)}, {"session_id", target.session_id}, {"qfi", target.qfi}};
  QB_CALL(client_->Post("/filters", body.dump(), "application/json"), "create filter", 201);
  return mark_filter_from_json(json::parse(r->body));
}

void HttpEmulatorClient::delete_filter(const std::string& id, DeleteOptions opts) {
  QB_CALL(client_->Delete("/filters/" + id + query(opts)), "delete filter " + id, 204);
}

std::vector<RadioLink> HttpEmulatorClient::radio_links() {
  QB_CALL(client_->Get("/radio-links"), "list radio links", 200);
  std::vector<RadioLink> out;
  for (const auto& j : json::parse(r->body)) out.push_back(radio_link_from_json(j));
  return out;
}

std::vector<PduSession> HttpEmulatorClient::pdu_sessions() {
  QB_CALL(client_->Get("/pdu-sessions"), "list PDU sessions", 200);
  std::vector<PduSession> out;
  for (const auto& j : json::parse(r->body)) out.push_back(pdu_session_from_json(j));
  return out;
}

std::vector<QosFlow> HttpEmulatorClient::qos_flows() {
  QB_CALL(client_->Get("/qos-flows"), "list QoS flows", 200);
  std::vector<QosFlow> out;
  for (const auto& j : json::parse(r->body)) out.push_back(qos_flow_from_json(j));
  return out;
}

std::vector<MarkFilter> HttpEmulatorClient::filters() {
  QB_CALL(client_->Get("/filters"), "list filters", 200);
  std::vector<MarkFilter> out;
  for (const auto& j : json::parse(r->body)) out.push_back(mark_filter_from_json(j));
  return out;
}

Classification HttpEmulatorClient::classify(std::uint32_t mark) {
  json body{{"mark", textio::hex(mark)}};
  QB_CALL(client_->Post("/classify", body.dump(), "application/json"), "classify", 200);
  auto j = json::parse(r->body);
  if (j.value("default", true)) return {};
  return {QosFlowRef{j.at("session_id").get<std::string>(), j.at("qfi").get<std::uint32_t>()}};
}

Delivery HttpEmulatorClient::transmit(const TransmitRequest& req) {
  QB_CALL(client_->Post("/transmit", to_json(req).dump(), "application/json"), "transmit", 200);
  return delivery_from_json(json::parse(r->body));
}

std::string HttpEmulatorClient::dump_tree() {
  QB_CALL(client_->Get("/tree"), "dump tree", 200);
  return r->body;
}

bool HttpEmulatorClient::healthy() {
  std::lock_guard lock(mutex_);
  auto r = client_->Get("/healthz");
  return r && r->status == 200;
}

#undef QB_CALL

}  // namespace qosbridge
