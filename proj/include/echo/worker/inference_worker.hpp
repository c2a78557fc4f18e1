// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "echo/buffer/buffer_service.hpp"
#include "echo/coordinator/coordinator_service.hpp"
#include "echo/core/clock.hpp"
#include "echo/core/run_config.hpp"
#include "echo/env/environment.hpp"
#include "echo/policy/snapshot_codec.hpp"
#include "echo/store/snapshot_service.hpp"
#include "echo/worker/rollout.hpp"

namespace echo::worker {

/// Body of POST /v1/rl/trajectories.
struct TrajectoryRequest {
  std::string model;
  ParamVersion param_version;
  std::vector<std::uint64_t> prompts;
  std::string algo = "GRPO";
};

struct TrajectoryResponse {
  ParamVersion param_version;
  std::vector<Trajectory> trajectories;
};

inline nlohmann::json to_json(const TrajectoryRequest& r) {
  return {{"model", r.model}, {"param_version", version_to_wire(r.param_version)}, {"prompts", r.prompts}, {"algo", r.algo}};
}

inline TrajectoryRequest trajectory_request_from_json(const nlohmann::json& j) {
  try {
    for (const char* k : {"model", "param_version", "prompts", "algo"}) {
      if (!j.contains(k)) throw SchemaError(std::string("trajectory request lacks '") + k + "'");
    }
    TrajectoryRequest r;
    r.model = j.at("model").get<std::string>();
    r.param_version = version_from_wire(j.at("param_version"));
    for (const auto& p : j.at("prompts")) {
      const auto id = p.is_string() ? std::stoull(p.get<std::string>()) : p.get<std::uint64_t>();
      if (id >= kPromptIdLimit) throw SchemaError("prompt id " + std::to_string(id) + " is not below 2^53");
      r.prompts.push_back(id);
    }
    if (r.prompts.empty()) throw SchemaError("trajectory request has no prompts");
    r.algo = j.at("algo").get<std::string>();
    if (r.algo != "GRPO" && r.algo != "PPO") throw SchemaError("unsupported algo '" + r.algo + "'");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed trajectory request: ") + e.what());
  } catch (const std::logic_error& e) {
    throw SchemaError(std::string("malformed trajectory request: ") + e.what());
  }
}

inline nlohmann::json to_json(const TrajectoryResponse& r) {
  nlohmann::json ts = nlohmann::json::array();
  for (const auto& t : r.trajectories) ts.push_back(to_json(t));
  return {{"param_version", version_to_wire(r.param_version)}, {"trajectories", ts}};
}

inline TrajectoryResponse trajectory_response_from_json(const nlohmann::json& j) {
  TrajectoryResponse r;
  r.param_version = version_from_wire(j.at("param_version"));
  for (const auto& t : j.at("trajectories")) r.trajectories.push_back(trajectory_from_json(t));
  return r;
}

struct WorkerOptions {
  std::string worker_id = "worker-0";
  RunConfig run;
  std::optional<net::Url> snapshot_url;
  std::optional<net::Url> buffer_url;
  std::optional<net::Url> coordinator_url;
};

struct WorkerMetrics {
  std::uint64_t rollouts_produced = 0;
  std::uint64_t batches_pushed = 0;
  std::uint64_t reloads = 0;
  std::int64_t reload_ms_total = 0;
  std::uint64_t push_retries = 0;
  std::uint64_t registrations = 0;
};

/// A member of the inference swarm. The resident policy is swapped as a
/// whole under a mutex, so sampling always sees one complete version.
class InferenceWorker {
 public:
  explicit InferenceWorker(WorkerOptions opt)
      : opt_(std::move(opt)), env_(env::Environment::from_config(opt_.run.env)) {
    validate(opt_.run);
    if (opt_.snapshot_url) store_.emplace(*opt_.snapshot_url);
  }

  const std::string& worker_id() const { return opt_.worker_id; }

  std::optional<ParamVersion> resident_version() const {
    auto r = resident();
    return r ? std::optional(r->params.version) : std::nullopt;
  }

  std::shared_ptr<const policy::PolicyParams> resident_params() const {
    auto r = resident();
    return r ? std::shared_ptr<const policy::PolicyParams>(r, &r->params) : nullptr;
  }

  WorkerMetrics metrics() const {
    std::lock_guard lock(metrics_mutex_);
    return metrics_;
  }

  /// Verifies, decodes and installs a snapshot. Throws ChecksumError or
  /// NotFoundError (missing delta base) and keeps the old policy on failure.
  void activate_snapshot(const store::PolicySnapshot& s) {
    if (!s.verifies()) {
      throw ChecksumError("snapshot v" + s.version.str() + " failed checksum verification; keeping v" +
                          (resident_version() ? resident_version()->str() : std::string("none")));
    }
    policy::PolicyParams params;
    if (s.kind == store::SnapshotKind::kFull) {
      params = policy::decode_full(s.payload);
      std::lock_guard lock(bases_mutex_);
      bases_[s.version] = params;
    } else {
      const auto delta = policy::decode_lora_delta(s.payload);
      std::lock_guard lock(bases_mutex_);
      auto it = bases_.find(delta.base_version);
      if (it == bases_.end()) {
        throw NotFoundError("lora_delta v" + s.version.str() + " needs base v" + delta.base_version.str() +
                            ", which this worker has not loaded");
      }
      params = policy::apply_delta(it->second, delta);
    }
    if (params.version != s.version) {
      throw SchemaError("snapshot labelled v" + s.version.str() + " decodes to v" + params.version.str());
    }
    auto next = std::make_shared<Resident>();
    next->effective = policy::effective_weights(params);
    next->params = std::move(params);
    std::lock_guard lock(resident_mutex_);
    resident_ = std::move(next);
  }

  /// Fetches version v (and its delta base when needed) and activates it.
  void fetch_and_activate(ParamVersion v) {
    if (!store_) throw ContractViolation("worker has no snapshot store configured");
    const auto started = steady_ms();
    store::PolicySnapshot snap;
    try {
      snap = store_->fetch(v);
    } catch (const NotFoundError&) {
      throw NotFoundError("snapshot v" + v.str() + " is not published; publish it before requesting rollouts");
    }
    if (snap.kind == store::SnapshotKind::kLoraDelta && snap.base_version) {
      bool have_base = false;
      {
        std::lock_guard lock(bases_mutex_);
        have_base = bases_.contains(*snap.base_version);
      }
      if (!have_base) activate_base(*snap.base_version);
    }
    activate_snapshot(snap);
    std::lock_guard lock(metrics_mutex_);
    ++metrics_.reloads;
    metrics_.reload_ms_total += steady_ms() - started;
  }

  /// Sequential-mode API: reload to the caller's version when the gap
  /// exceeds the threshold, then sample rollout_n episodes per prompt.
  TrajectoryResponse serve_trajectories(const TrajectoryRequest& req) {
    std::lock_guard serve(serve_mutex_);
    auto current = resident();
    if (!current || distance(req.param_version, current->params.version) > opt_.run.version_gap_threshold) {
      fetch_and_activate(req.param_version);
      current = resident();
    }
    TrajectoryResponse out;
    out.param_version = current->params.version;
    out.trajectories = sample_sequential(env_, current->effective, current->params.version, opt_.run.seed, req.prompts,
                                         opt_.run.rollout_n);
    std::lock_guard lock(metrics_mutex_);
    metrics_.rollouts_produced += out.trajectories.size();
    return out;
  }

  /// Produces one inference batch with the resident policy.
  RolloutBatch sample_async_batch(std::uint64_t incarnation, std::uint64_t batch_index) {
    const auto current = resident();
    if (!current) throw ContractViolation("no resident policy");
    const auto prompts = opt_.run.inference_batch / opt_.run.rollout_n;
    RolloutBatch b;
    b.param_version = current->params.version;
    b.group_size = opt_.run.rollout_n;
    b.worker_id = opt_.worker_id;
    for (std::uint32_t k = 0; k < prompts; ++k) {
      const std::uint64_t prompt = (incarnation << 32) | (batch_index * prompts + k);
      b.prompt_ids.push_back(prompt);
      for (std::uint32_t j = 0; j < opt_.run.rollout_n; ++j) {
        auto rng = seeded_rng(opt_.run.seed, async_label(opt_.worker_id, incarnation, batch_index, prompt, j));
        b.trajectories.push_back(rollout_episode(env_, current->effective, prompt, rng));
      }
    }
    b.produced_at = wall_clock_ms();
    return b;
  }

  /// Async producer loop: sample, push, obey sync commands, until `stop`.
  void run_async_loop(const std::atomic<bool>& stop) {
    if (!opt_.buffer_url || !opt_.coordinator_url || !store_) {
      throw ContractViolation("async mode needs snapshot, buffer and coordinator URLs");
    }
    buffer::BufferClient buf(*opt_.buffer_url);
    coordinator::CoordinatorClient coord(*opt_.coordinator_url);
    std::uint64_t incarnation = join(coord, stop);
    std::uint64_t batch_index = 0;
    auto sync_to = [&](const coordinator::PollResult& reply) {
      fetch_and_activate(reply.t_train);
      coord.report_worker_version(opt_.worker_id, reply.t_train);
    };
    while (!stop) {
      try {
        auto batch = sample_async_batch(incarnation, batch_index++);
        const auto n = batch.trajectories.size();
        bool pushed = false;
        while (!stop) {
          if (buf.push(batch, std::chrono::milliseconds{200}).accepted) {
            pushed = true;
            break;
          }
          {
            std::lock_guard lock(metrics_mutex_);
            ++metrics_.push_retries;
          }
          // Heartbeat while blocked. A sync command retires the version this
          // batch was sampled with, so the batch is dropped unpushed.
          const auto beat = coord.poll(opt_.worker_id);
          if (beat.command) {
            sync_to(beat);
            break;
          }
        }
        if (!pushed) continue;
        {
          std::lock_guard lock(metrics_mutex_);
          metrics_.rollouts_produced += n;
          ++metrics_.batches_pushed;
        }
        const auto reply = coord.poll(opt_.worker_id);
        if (reply.command) sync_to(reply);
      } catch (const ConflictError&) {
        // Marked degraded (or otherwise out of step): rejoin from scratch.
        incarnation = join(coord, stop);
        batch_index = 0;
      } catch (const TransportError&) {
        std::this_thread::sleep_for(std::chrono::milliseconds{200});
      } catch (const NotFoundError&) {
        std::this_thread::sleep_for(std::chrono::milliseconds{50});
      }
    }
  }

 private:
  struct Resident {
    policy::PolicyParams params;
    policy::Matrix effective;
  };

  std::shared_ptr<const Resident> resident() const {
    std::lock_guard lock(resident_mutex_);
    return resident_;
  }

  void activate_base(ParamVersion base) {
    const auto snap = store_->fetch(base);
    if (snap.kind != store::SnapshotKind::kFull) {
      throw NotFoundError("delta base v" + base.str() + " is not a full snapshot");
    }
    if (!snap.verifies()) throw ChecksumError("delta base v" + base.str() + " failed checksum verification");
    std::lock_guard lock(bases_mutex_);
    bases_[base] = policy::decode_full(snap.payload);
  }

  // Registers, loads the trainer's current version and reports it. Retries
  // until the snapshot exists and the services answer.
  std::uint64_t join(const coordinator::CoordinatorClient& coord, const std::atomic<bool>& stop) {
    while (!stop) {
      try {
        const auto reg = coord.register_worker(opt_.worker_id);
        {
          std::lock_guard lock(metrics_mutex_);
          ++metrics_.registrations;
        }
        fetch_and_activate(reg.t_train);
        coord.report_worker_version(opt_.worker_id, reg.t_train);
        return reg.incarnation;
      } catch (const TransportError&) {
      } catch (const NotFoundError&) {
      } catch (const ConflictError&) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds{100});
    }
    return 0;
  }

  WorkerOptions opt_;
  env::Environment env_;
  std::optional<store::SnapshotClient> store_;
  mutable std::mutex resident_mutex_;
  std::shared_ptr<const Resident> resident_;
  std::mutex bases_mutex_;
  std::map<ParamVersion, policy::PolicyParams> bases_;
  std::mutex serve_mutex_;
  mutable std::mutex metrics_mutex_;
  WorkerMetrics metrics_;
};

/// HTTP front end: the trajectory API and a health probe.
class WorkerService : public net::Service {
 public:
  explicit WorkerService(InferenceWorker& w) : worker_(w) {
    auto& s = server();
    s.Post("/v1/rl/trajectories", [this](const httplib::Request& req, httplib::Response& res) {
      net::guarded(res, [&] {
        const auto request = trajectory_request_from_json(net::parse_body(req));
        net::write_json(res, 200, to_json(worker_.serve_trajectories(request)));
      });
    });
    s.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
      net::guarded(res, [&] {
        const auto v = worker_.resident_version();
        const auto m = worker_.metrics();
        net::write_json(res, 200,
                        {{"status", "ok"},
                         {"worker_id", worker_.worker_id()},
                         {"resident_version", v ? nlohmann::json(v->value) : nlohmann::json(nullptr)},
                         {"rollouts_produced", m.rollouts_produced},
                         {"batches_pushed", m.batches_pushed},
                         {"reloads", m.reloads},
                         {"reload_ms_total", m.reload_ms_total},
                         {"push_retries", m.push_retries}});
      });
    });
  }

  ~WorkerService() override { stop(); }

 private:
  InferenceWorker& worker_;
};

class WorkerClient {
 public:
  explicit WorkerClient(net::Url url, std::chrono::milliseconds timeout = std::chrono::milliseconds{120'000})
      : http_(std::move(url), timeout) {}

  TrajectoryResponse trajectories(const TrajectoryRequest& req) const {
    return trajectory_response_from_json(http_.call("POST", "/v1/rl/trajectories", to_json(req)));
  }

  nlohmann::json health() const { return http_.call("GET", "/healthz"); }

  const net::Url& url() const { return http_.url(); }

 private:
  net::Client http_;
};

}  // namespace echo::worker
