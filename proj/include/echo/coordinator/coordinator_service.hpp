// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "echo/coordinator/coordinator.hpp"
#include "echo/net/http.hpp"

namespace echo::coordinator {

/// HTTP front end for a Coordinator. A background ticker applies liveness
/// timeouts even when no worker is talking.
class CoordinatorService : public net::Service {
 public:
  static constexpr std::int64_t kMaxWaitMs = 30'000;

  explicit CoordinatorService(Coordinator& c, std::chrono::milliseconds tick = std::chrono::milliseconds{100})
      : coordinator_(c) {
    auto& s = server();
    add_health("coordinator");
    s.Post("/v1/coordinator/register", [this](const httplib::Request& req, httplib::Response& res) {
      net::guarded(res, [&] {
        const auto r = coordinator_.register_worker(net::parse_body(req).at("worker_id").get<std::string>());
        net::write_json(res, 200, {{"incarnation", r.incarnation}, {"t_train", r.t_train.value}});
      });
    });
    s.Post("/v1/coordinator/train_step", [this](const httplib::Request& req, httplib::Response& res) {
      net::guarded(res, [&] {
        const auto cmd = coordinator_.report_train_step(version_from_wire(net::parse_body(req).at("version")));
        net::write_json(res, 200, {{"sync_weight", cmd ? to_json(*cmd) : nlohmann::json(nullptr)}});
      });
    });
    s.Post("/v1/coordinator/worker_version", [this](const httplib::Request& req, httplib::Response& res) {
      net::guarded(res, [&] {
        const auto body = net::parse_body(req);
        coordinator_.report_worker_version(body.at("worker_id").get<std::string>(),
                                           version_from_wire(body.at("version")));
        net::write_json(res, 200, {{"ok", true}});
      });
    });
    s.Get("/v1/coordinator/commands", [this](const httplib::Request& req, httplib::Response& res) {
      net::guarded(res, [&] {
        if (!req.has_param("worker_id")) throw SchemaError("commands requires worker_id");
        std::int64_t wait = 0;
        if (req.has_param("wait_ms")) wait = std::stoll(req.get_param_value("wait_ms"));
        const auto reply = coordinator_.poll(req.get_param_value("worker_id"),
                                             std::chrono::milliseconds{std::clamp<std::int64_t>(wait, 0, kMaxWaitMs)});
        net::write_json(res, 200,
                        {{"sync_weight", reply.command ? to_json(*reply.command) : nlohmann::json(nullptr)},
                         {"t_train", reply.t_train.value}});
      });
    });
    s.Get("/v1/coordinator/skew", [this](const httplib::Request&, httplib::Response& res) {
      net::guarded(res, [&] { net::write_json(res, 200, to_json(coordinator_.skew())); });
    });
    ticker_ = std::thread([this, tick] {
      std::unique_lock lock(tick_mutex_);
      while (!tick_cv_.wait_for(lock, tick, [this] { return stopping_; })) coordinator_.tick();
    });
  }

  ~CoordinatorService() override {
    {
      std::lock_guard lock(tick_mutex_);
      stopping_ = true;
    }
    tick_cv_.notify_all();
    ticker_.join();
    stop();
  }

 private:
  Coordinator& coordinator_;
  std::mutex tick_mutex_;
  std::condition_variable tick_cv_;
  bool stopping_ = false;
  std::thread ticker_;
};

struct PollResult {
  std::optional<SyncCommand> command;
  ParamVersion t_train;
};

class CoordinatorClient {
 public:
  explicit CoordinatorClient(net::Url url) : http_(std::move(url)) {}

  RegisterReply register_worker(const std::string& worker_id) const {
    const auto j = http_.call("POST", "/v1/coordinator/register", {{"worker_id", worker_id}});
    return {j.at("incarnation").get<std::uint64_t>(), ParamVersion{j.at("t_train").get<std::uint64_t>()}};
  }

  std::optional<SyncCommand> report_train_step(ParamVersion v) const {
    return command_of(http_.call("POST", "/v1/coordinator/train_step", {{"version", v.value}}));
  }

  void report_worker_version(const std::string& worker_id, ParamVersion v) const {
    http_.call("POST", "/v1/coordinator/worker_version", {{"worker_id", worker_id}, {"version", v.value}});
  }

  PollResult poll(const std::string& worker_id, std::chrono::milliseconds wait = std::chrono::milliseconds{0}) const {
    const auto j = http_.call("GET",
                              "/v1/coordinator/commands?worker_id=" + worker_id + "&wait_ms=" + std::to_string(wait.count()),
                              nullptr, wait + std::chrono::seconds{30});
    return {command_of(j), ParamVersion{j.at("t_train").get<std::uint64_t>()}};
  }

  nlohmann::json skew() const { return http_.call("GET", "/v1/coordinator/skew"); }

  const net::Url& url() const { return http_.url(); }

 private:
  static std::optional<SyncCommand> command_of(const nlohmann::json& j) {
    const auto& c = j.at("sync_weight");
    if (c.is_null()) return std::nullopt;
    return SyncCommand{c.at("round").get<std::uint64_t>(), ParamVersion{c.at("target_version").get<std::uint64_t>()}};
  }

  net::Client http_;
};

}  // namespace echo::coordinator
