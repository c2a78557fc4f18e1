// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "echo/core/error.hpp"

namespace echo::net {

struct Url {
  std::string host;
  int port = 0;

  std::string str() const { return "http://" + host + ":" + std::to_string(port); }
};

inline Url parse_url(std::string_view s) {
  if (s.starts_with("http://")) s.remove_prefix(7);
  while (s.ends_with('/')) s.remove_suffix(1);
  const auto colon = s.rfind(':');
  if (colon == std::string_view::npos || colon == 0) throw SchemaError("expected host:port, got '" + std::string(s) + "'");
  Url u{std::string(s.substr(0, colon)), 0};
  try {
    u.port = std::stoi(std::string(s.substr(colon + 1)));
  } catch (const std::exception&) {
    throw SchemaError("bad port in '" + std::string(s) + "'");
  }
  return u;
}

// ---- error mapping ---------------------------------------------------------

struct WireError {
  int status;
  const char* kind;
};

inline WireError wire_error_for(const std::exception& e) {
  if (dynamic_cast<const SchemaError*>(&e)) return {400, "schema"};
  if (dynamic_cast<const ChecksumError*>(&e)) return {400, "checksum"};
  if (dynamic_cast<const NotFoundError*>(&e)) return {404, "not_found"};
  if (dynamic_cast<const ConflictError*>(&e)) return {409, "conflict"};
  if (dynamic_cast<const AlignmentError*>(&e)) return {422, "alignment"};
  if (dynamic_cast<const InfeasibleError*>(&e)) return {422, "infeasible"};
  if (dynamic_cast<const ContractViolation*>(&e)) return {422, "contract"};
  if (dynamic_cast<const DivergenceError*>(&e)) return {500, "divergence"};
  if (dynamic_cast<const nlohmann::json::exception*>(&e)) return {400, "schema"};
  return {500, "internal"};
}

inline void write_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void write_error(httplib::Response& res, int status, std::string_view kind, std::string_view message) {
  write_json(res, status, {{"error", kind}, {"message", message}});
}

/// Runs a handler body, turning thrown errors into JSON error responses.
template <class F>
void guarded(httplib::Response& res, F&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    const auto w = wire_error_for(e);
    write_error(res, w.status, w.kind, e.what());
  }
}

inline nlohmann::json parse_body(const httplib::Request& req) {
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("request body is not JSON: ") + e.what());
  }
}

/// Rethrows a remote error response as the matching local exception type.
[[noreturn]] inline void raise_remote(int status, const std::string& body, const std::string& what) {
  std::string kind, message = body;
  try {
    const auto j = nlohmann::json::parse(body);
    kind = j.value("error", "");
    message = j.value("message", body);
  } catch (const nlohmann::json::exception&) {
  }
  message = what + ": " + message;
  if (kind == "schema") throw SchemaError(message);
  if (kind == "checksum") throw ChecksumError(message);
  if (kind == "not_found" || status == 404) throw NotFoundError(message);
  if (kind == "conflict" || status == 409) throw ConflictError(message);
  if (kind == "alignment") throw AlignmentError(message);
  if (kind == "infeasible") throw InfeasibleError(message);
  if (kind == "contract") throw ContractViolation(message);
  if (kind == "divergence") throw DivergenceError(message);
  throw Error(message + " (HTTP " + std::to_string(status) + ")");
}

// ---- server ----------------------------------------------------------------

/// An httplib server listening on a background thread.
class Service {
 public:
  Service() {
    server_.new_task_queue = [] { return new httplib::ThreadPool(16); };
  }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  virtual ~Service() { stop(); }

  httplib::Server& server() { return server_; }

  /// Registers GET /healthz answering {"status": "ok", "service": name}.
  void add_health(std::string name) {
    server_.Get("/healthz", [name](const httplib::Request&, httplib::Response& res) {
      write_json(res, 200, {{"status", "ok"}, {"service", name}});
    });
  }

  /// Binds (port 0 picks a free one) and starts serving. Returns the port.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    if (port == 0) {
      port_ = server_.bind_to_any_port(host);
    } else {
      port_ = server_.bind_to_port(host, port) ? port : -1;
    }
    if (port_ < 0) throw TransportError("cannot bind " + host + ":" + std::to_string(port));
    host_ = host;
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  /// Blocks the calling thread serving requests until stop() is called.
  void serve_forever(const std::string& host, int port) {
    host_ = host;
    port_ = port;
    if (!server_.listen(host, port)) throw TransportError("cannot listen on " + host + ":" + std::to_string(port));
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }
  Url url() const { return {host_, port_}; }

 private:
  httplib::Server server_;
  std::thread thread_;
  std::string host_ = "127.0.0.1";
  int port_ = -1;
};

// ---- client ----------------------------------------------------------------

struct RawResponse {
  int status = 0;
  std::string body;
  httplib::Headers headers;

  std::string header(const std::string& key) const {
    auto it = headers.find(key);
    return it == headers.end() ? std::string() : it->second;
  }
};

/// Thin blocking client. Transport failures throw TransportError; non-2xx
/// responses are returned to the caller or raised via raise_remote.
class Client {
 public:
  explicit Client(Url url, std::chrono::milliseconds timeout = std::chrono::milliseconds{30'000})
      : url_(std::move(url)), timeout_(timeout) {}

  const Url& url() const { return url_; }

  RawResponse request(const std::string& method, const std::string& path, const std::string& body = {},
                      const std::string& content_type = "application/json", const httplib::Headers& headers = {},
                      std::optional<std::chrono::milliseconds> timeout = std::nullopt) const {
    httplib::Client cli(url_.host, url_.port);
    const auto t = timeout.value_or(timeout_);
    cli.set_connection_timeout(std::chrono::seconds{5});
    cli.set_read_timeout(t);
    cli.set_write_timeout(t);
    httplib::Result r{nullptr, httplib::Error::Unknown};
    if (method == "GET") {
      r = cli.Get(path, headers);
    } else if (method == "POST") {
      r = cli.Post(path, headers, body, content_type);
    } else if (method == "PUT") {
      r = cli.Put(path, headers, body, content_type);
    } else {
      throw ContractViolation("unsupported method " + method);
    }
    if (!r) {
      throw TransportError(method + " " + url_.str() + path + " failed: " + httplib::to_string(r.error()));
    }
    return {r->status, r->body, r->headers};
  }

  /// Sends JSON and returns the JSON reply, raising on any non-2xx status.
  nlohmann::json call(const std::string& method, const std::string& path, const nlohmann::json& body = nullptr,
                      std::optional<std::chrono::milliseconds> timeout = std::nullopt) const {
    const auto r = request(method, path, body.is_null() ? std::string() : body.dump(), "application/json", {}, timeout);
    if (r.status < 200 || r.status >= 300) raise_remote(r.status, r.body, method + " " + path);
    try {
      return r.body.empty() ? nlohmann::json(nullptr) : nlohmann::json::parse(r.body);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError(method + " " + path + " returned non-JSON: " + e.what());
    }
  }

 private:
  Url url_;
  std::chrono::milliseconds timeout_;
};

/// Retries `fn` on TransportError until it succeeds or `deadline_ms` passes.
template <class F>
auto with_retry(F&& fn, std::chrono::milliseconds deadline, std::chrono::milliseconds backoff = std::chrono::milliseconds{100}) {
  const auto until = std::chrono::steady_clock::now() + deadline;
  for (;;) {
    try {
      return fn();
    } catch (const TransportError&) {
      if (std::chrono::steady_clock::now() >= until) throw;
      std::this_thread::sleep_for(backoff);
    }
  }
}

}  // namespace echo::net
