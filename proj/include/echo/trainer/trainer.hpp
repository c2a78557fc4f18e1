// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <future>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "echo/buffer/buffer_service.hpp"
#include "echo/coordinator/coordinator_service.hpp"
#include "echo/core/clock.hpp"
#include "echo/core/run_config.hpp"
#include "echo/env/environment.hpp"
#include "echo/policy/grpo.hpp"
#include "echo/policy/snapshot_codec.hpp"
#include "echo/store/snapshot_service.hpp"
#include "echo/trainer/training_log.hpp"
#include "echo/worker/inference_worker.hpp"

namespace echo::trainer {

struct TrainerEndpoints {
  net::Url snapshot_url;
  std::vector<net::Url> worker_urls;         // sequential mode
  std::optional<net::Url> buffer_url;        // async mode
  std::optional<net::Url> coordinator_url;   // async mode
};

struct TrainerOptions {
  std::string model = "echo-policy";
  int request_attempts = 3;
  std::chrono::milliseconds retry_backoff{200};
  // Called after every completed step; used for progress output and tests.
  std::function<void(const StepRecord&)> on_step;
};

/// The training swarm. Both modes append to `log` as they go, so a caller
/// that catches an abort still holds the partial log.
class Trainer {
 public:
  Trainer(RunConfig cfg, TrainerEndpoints endpoints, TrainerOptions opt = {})
      : cfg_(std::move(cfg)),
        endpoints_(std::move(endpoints)),
        opt_(std::move(opt)),
        env_(env::Environment::from_config(cfg_.env)),
        store_(endpoints_.snapshot_url) {
    validate(cfg_);
  }

  /// Publishes p as its own version: full payload for v0 or in full mode,
  /// a LoRA delta against v0 otherwise. A store conflict is fatal.
  ParamVersion publish_checkpoint(const policy::PolicyParams& p) {
    store::PolicySnapshot snap;
    if (p.adapter && p.version != ParamVersion{0}) {
      snap = store::make_snapshot(p.version, store::SnapshotKind::kLoraDelta,
                                  policy::encode_lora_delta(p, ParamVersion{0}), ParamVersion{0});
    } else {
      snap = store::make_snapshot(p.version, store::SnapshotKind::kFull, policy::encode_full(p));
    }
    try {
      store_.publish(snap);
    } catch (const ConflictError& e) {
      throw ConflictError(std::string("publish conflict, another trainer owns this store: ") + e.what());
    }
    return p.version;
  }

  void train_sequential(std::uint64_t steps, TrainingLog& log) {
    if (endpoints_.worker_urls.empty()) throw ContractViolation("sequential mode needs at least one worker");
    std::vector<worker::WorkerClient> workers;
    for (const auto& u : endpoints_.worker_urls) workers.emplace_back(u);
    const auto spec = env_.feature_spec();
    auto p = policy::initial_policy(env_.action_count(), spec.dim(), cfg_);
    publish_checkpoint(p);
    log.trail.push_back(p);
    for (std::uint64_t s = 0; s < steps; ++s) {
      const auto started = steady_ms();
      const auto prompts = worker::step_prompts(cfg_.seed, s, cfg_.prompts_per_step());
      StepRecord rec;
      rec.step = s;
      std::vector<Trajectory> trajectories;
      // Prompts are split into contiguous chunks, one per worker, and the
      // replies concatenated in prompt order.
      const auto chunk = (prompts.size() + workers.size() - 1) / workers.size();
      std::vector<std::future<worker::TrajectoryResponse>> pending;
      std::vector<std::size_t> owners;
      for (std::size_t w = 0; w < workers.size() && w * chunk < prompts.size(); ++w) {
        worker::TrajectoryRequest req;
        req.model = opt_.model;
        req.param_version = p.version;
        req.prompts.assign(prompts.begin() + w * chunk, prompts.begin() + std::min(prompts.size(), (w + 1) * chunk));
        owners.push_back(w);
        pending.push_back(std::async(std::launch::async, [this, &workers, w, req] { return request(workers[w], req); }));
      }
      for (std::size_t k = 0; k < pending.size(); ++k) {
        auto resp = pending[k].get();
        const auto expected = std::min(prompts.size(), (owners[k] + 1) * chunk) - owners[k] * chunk;
        if (resp.trajectories.size() != expected * cfg_.rollout_n) {
          throw SchemaError("worker " + workers[owners[k]].url().str() + " returned " +
                            std::to_string(resp.trajectories.size()) + " trajectories for " + std::to_string(expected) +
                            " prompts");
        }
        const auto staleness = distance(p.version, resp.param_version);
        for (std::size_t i = 0; i < resp.trajectories.size(); ++i) {
          const auto prompt = prompts[owners[k] * chunk + i / cfg_.rollout_n];
          rec.ledger.push_back({workers[owners[k]].url().str(), prompt, resp.param_version, s,
                                static_cast<std::uint32_t>(trajectories.size()), staleness});
          ++rec.staleness_histogram[staleness];
          trajectories.push_back(std::move(resp.trajectories[i]));
        }
      }
      rec.mean_return = worker::mean_return(trajectories);
      const auto groups = worker::group_by_prompt(prompts, std::move(trajectories), cfg_.rollout_n);
      p = update(p, groups, s);
      publish_checkpoint(p);
      rec.version = p.version;
      rec.wall_ms = steady_ms() - started;
      finish_step(log, std::move(rec), p);
    }
  }

  void train_async(std::uint64_t steps, TrainingLog& log) {
    if (!endpoints_.buffer_url || !endpoints_.coordinator_url) {
      throw ContractViolation("async mode needs buffer and coordinator URLs");
    }
    if (!coordinator::validate_alignment(cfg_.inference_batch, cfg_.trainer_minibatch)) {
      throw AlignmentError("inference_batch " + std::to_string(cfg_.inference_batch) +
                           " is not an integer multiple of trainer_minibatch " +
                           std::to_string(cfg_.trainer_minibatch) + "; refusing to start");
    }
    buffer::BufferClient buffer(*endpoints_.buffer_url);
    coordinator::CoordinatorClient coord(*endpoints_.coordinator_url);
    const auto spec = env_.feature_spec();
    auto shuffle_rng = seeded_rng(cfg_.seed, "trainer/async/shuffle");
    auto p = policy::initial_policy(env_.action_count(), spec.dim(), cfg_);
    publish_checkpoint(p);
    log.trail.push_back(p);
    for (std::uint64_t s = 0; s < steps; ++s) {
      const auto started = steady_ms();
      const auto t_train = p.version;
      const ParamVersion floor{t_train.value > cfg_.delta_max ? t_train.value - cfg_.delta_max - 1 : 0};
      buffer.evict_stale(floor);
      const auto batch = pull_minibatch(buffer, coord, floor);

      StepRecord rec;
      rec.step = s;
      std::vector<Trajectory> trajectories;
      std::vector<std::uint64_t> prompts;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& c = batch[i];
        if (c.param_version > t_train) {
          throw ConflictError("pulled data from v" + c.param_version.str() + " ahead of t_train v" + t_train.str());
        }
        const auto staleness = t_train.value - c.param_version.value;
        if (staleness > cfg_.delta_max + 1) {
          throw ContractViolation("consumed trajectory with staleness " + std::to_string(staleness) +
                                  " above delta_max + 1");
        }
        rec.ledger.push_back({c.worker_id, c.prompt_id, c.param_version, c.sequence_no, c.offset, staleness});
        ++rec.staleness_histogram[staleness];
        if (i % cfg_.rollout_n == 0) {
          prompts.push_back(c.prompt_id);
        } else if (c.prompt_id != prompts.back()) {
          throw AlignmentError("pulled minibatch splits a GRPO group");
        }
        trajectories.push_back(c.trajectory);
      }
      rec.mean_return = worker::mean_return(trajectories);
      auto groups = worker::group_by_prompt(prompts, std::move(trajectories), cfg_.rollout_n);
      shuffle_rng.shuffle(groups.begin(), groups.end());
      p = update(p, groups, s);
      publish_checkpoint(p);
      coord.report_train_step(p.version);
      rec.version = p.version;
      rec.wall_ms = steady_ms() - started;
      finish_step(log, std::move(rec), p);
    }
  }

 private:
  worker::TrajectoryResponse request(const worker::WorkerClient& w, const worker::TrajectoryRequest& req) const {
    for (int attempt = 1;; ++attempt) {
      try {
        return w.trajectories(req);
      } catch (const TransportError& e) {
        if (attempt >= opt_.request_attempts) {
          throw TransportError("worker " + w.url().str() + " unreachable after " + std::to_string(attempt) +
                               " attempts: " + e.what());
        }
        std::this_thread::sleep_for(opt_.retry_backoff);
      }
    }
  }

  std::vector<buffer::ConsumedTrajectory> pull_minibatch(const buffer::BufferClient& buffer,
                                                         const coordinator::CoordinatorClient& coord,
                                                         ParamVersion floor) const {
    const auto deadline = steady_ms() + cfg_.pull_timeout_ms;
    for (bool first = true;; first = false) {
      // Stale pushes can land while we wait and fill the buffer; evict again
      // so back-pressure never blocks the fresh data we are waiting for.
      if (!first) buffer.evict_stale(floor);
      const auto remaining = deadline - steady_ms();
      const auto wait = std::chrono::milliseconds{std::clamp<std::int64_t>(remaining, 0, 200)};
      auto out = buffer.pull(cfg_.trainer_minibatch, floor, wait);
      if (!out.empty()) return std::move(out.trajectories);
      if (steady_ms() >= deadline) {
        std::string skew = "unavailable";
        try {
          skew = coord.skew().dump();
        } catch (const Error&) {
        }
        throw Error("no eligible data (min_version " + floor.str() + ") within " +
                    std::to_string(cfg_.pull_timeout_ms) + " ms; buffer " + to_json(buffer.stats()).dump() +
                    "; coordinator " + skew);
      }
    }
  }

  policy::PolicyParams update(const policy::PolicyParams& p, const std::vector<policy::GrpoGroup>& groups,
                              std::uint64_t step) const {
    try {
      return policy::grpo_update(p, groups, cfg_, env_.feature_spec());
    } catch (const DivergenceError& e) {
      throw DivergenceError("training diverged at step " + std::to_string(step) + ": " + e.what());
    }
  }

  void finish_step(TrainingLog& log, StepRecord rec, const policy::PolicyParams& p) const {
    log.trail.push_back(p);
    log.steps.push_back(std::move(rec));
    if (opt_.on_step) opt_.on_step(log.steps.back());
  }

  RunConfig cfg_;
  TrainerEndpoints endpoints_;
  TrainerOptions opt_;
  env::Environment env_;
  store::SnapshotClient store_;
};

}  // namespace echo::trainer
