// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <chrono>
#include <string>

#include "echo/buffer/replay_buffer.hpp"
#include "echo/net/http.hpp"

namespace echo::buffer {

/// HTTP front end for a ReplayBuffer. A full buffer answers a push with 429
/// and a Retry-After-Ms header; `wait_ms` in a request body lets the caller
/// block server-side instead.
class BufferService : public net::Service {
 public:
  static constexpr std::int64_t kMaxWaitMs = 30'000;

  explicit BufferService(ReplayBuffer& buffer) : buffer_(buffer) {
    auto& s = server();
    add_health("replay-buffer");
    s.Post("/v1/buffer/push", [this](const httplib::Request& req, httplib::Response& res) {
      net::guarded(res, [&] {
        const auto body = net::parse_body(req);
        const auto out = buffer_.push(rollout_batch_from_json(body), wait_of(body));
        if (!out.accepted) {
          res.set_header("Retry-After-Ms", std::to_string(out.retry_after_ms));
          net::write_json(res, 429, {{"accepted", false}, {"retry_after_ms", out.retry_after_ms}});
          return;
        }
        net::write_json(res, 200, {{"accepted", true}, {"sequence_no", out.sequence_no}});
      });
    });
    s.Post("/v1/buffer/pull", [this](const httplib::Request& req, httplib::Response& res) {
      net::guarded(res, [&] {
        const auto body = net::parse_body(req);
        const auto out = buffer_.pull(body.at("n").get<std::uint32_t>(), version_from_wire(body.at("min_version")),
                                      wait_of(body));
        nlohmann::json items = nlohmann::json::array();
        for (const auto& c : out.trajectories) items.push_back(to_json(c));
        net::write_json(res, 200, {{"trajectories", items}, {"wait_hint_ms", out.wait_hint_ms}});
      });
    });
    s.Post("/v1/buffer/evict", [this](const httplib::Request& req, httplib::Response& res) {
      net::guarded(res, [&] {
        const auto body = net::parse_body(req);
        net::write_json(res, 200, {{"evicted", buffer_.evict_stale(version_from_wire(body.at("min_version")))}});
      });
    });
    s.Get("/v1/buffer/stats", [this](const httplib::Request&, httplib::Response& res) {
      net::guarded(res, [&] { net::write_json(res, 200, to_json(buffer_.stats())); });
    });
  }

  ~BufferService() override { stop(); }

 private:
  static std::chrono::milliseconds wait_of(const nlohmann::json& body) {
    const auto ms = body.value("wait_ms", std::int64_t{0});
    return std::chrono::milliseconds{std::clamp<std::int64_t>(ms, 0, kMaxWaitMs)};
  }

  ReplayBuffer& buffer_;
};

class BufferClient {
 public:
  explicit BufferClient(net::Url url) : http_(std::move(url)) {}

  PushOutcome push(const RolloutBatch& b, std::chrono::milliseconds wait = std::chrono::milliseconds{0}) const {
    auto body = to_json(b);
    body["wait_ms"] = wait.count();
    const auto r = http_.request("POST", "/v1/buffer/push", body.dump(), "application/json", {},
                                 wait + std::chrono::seconds{30});
    if (r.status == 429) {
      const auto j = nlohmann::json::parse(r.body);
      return {false, 0, j.at("retry_after_ms").get<std::uint32_t>()};
    }
    if (r.status != 200) net::raise_remote(r.status, r.body, "buffer push");
    return {true, nlohmann::json::parse(r.body).at("sequence_no").get<std::uint64_t>(), 0};
  }

  PullOutcome pull(std::uint32_t n, ParamVersion min_version,
                   std::chrono::milliseconds wait = std::chrono::milliseconds{0}) const {
    const auto j = http_.call("POST", "/v1/buffer/pull",
                              {{"n", n}, {"min_version", version_to_wire(min_version)}, {"wait_ms", wait.count()}},
                              wait + std::chrono::seconds{30});
    PullOutcome out;
    out.wait_hint_ms = j.at("wait_hint_ms").get<std::uint32_t>();
    for (const auto& c : j.at("trajectories")) out.trajectories.push_back(consumed_from_json(c));
    return out;
  }

  std::uint64_t evict_stale(ParamVersion min_version) const {
    return http_.call("POST", "/v1/buffer/evict", {{"min_version", version_to_wire(min_version)}})
        .at("evicted")
        .get<std::uint64_t>();
  }

  BufferStats stats() const { return buffer_stats_from_json(http_.call("GET", "/v1/buffer/stats")); }

  const net::Url& url() const { return http_.url(); }

 private:
  net::Client http_;
};

}  // namespace echo::buffer
