// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>

#include <json.hpp>

#include "echo/core/clock.hpp"
#include "echo/core/error.hpp"
#include "echo/core/param_version.hpp"

namespace echo::coordinator {

struct SyncCommand {
  std::uint64_t round = 0;
  ParamVersion target_version;  // workers must reach at least this version
};

struct WorkerState {
  std::uint64_t incarnation = 0;
  std::optional<ParamVersion> version;
  std::int64_t last_seen_ms = 0;
  bool degraded = false;
};

struct SkewState {
  ParamVersion t_train;
  ParamVersion t_infer;
  std::uint64_t delta_max = 0;
  std::int64_t last_sync_at = 0;
  std::uint64_t rounds_issued = 0;
  std::uint64_t rounds_completed = 0;
  std::optional<SyncCommand> in_flight;
  std::map<std::string, WorkerState> workers;
};

struct RegisterReply {
  std::uint64_t incarnation = 0;
  ParamVersion t_train;
};

/// What a polling worker is told: an outstanding command, if it applies to
/// that worker, and the trainer version it should load to satisfy it.
struct PollReply {
  std::optional<SyncCommand> command;
  ParamVersion t_train;
};

inline nlohmann::json to_json(const SyncCommand& c) {
  return {{"round", c.round}, {"target_version", c.target_version.value}};
}

inline nlohmann::json to_json(const SkewState& s) {
  nlohmann::json workers = nlohmann::json::object();
  for (const auto& [id, w] : s.workers) {
    workers[id] = {{"incarnation", w.incarnation},
                   {"version", w.version ? nlohmann::json(w.version->value) : nlohmann::json(nullptr)},
                   {"last_seen_ms", w.last_seen_ms},
                   {"degraded", w.degraded}};
  }
  return {{"t_train", s.t_train.value},
          {"t_infer", s.t_infer.value},
          {"skew", s.t_train.value - s.t_infer.value},
          {"delta_max", s.delta_max},
          {"last_sync_at", s.last_sync_at},
          {"rounds_issued", s.rounds_issued},
          {"rounds_completed", s.rounds_completed},
          {"in_flight", s.in_flight ? to_json(*s.in_flight) : nlohmann::json(nullptr)},
          {"workers", workers}};
}

/// True when inference batches and trainer minibatches tile each other.
inline bool validate_alignment(std::uint64_t inference_batch, std::uint64_t trainer_minibatch) {
  return inference_batch > 0 && trainer_minibatch > 0 && inference_batch % trainer_minibatch == 0;
}

/// Tracks trainer and inference versions and issues weight synchronisation
/// rounds whenever t_train - t_infer exceeds delta_max. At most one round is
/// outstanding. Workers silent for longer than the liveness timeout are
/// marked degraded and leave t_infer until they register again.
class Coordinator {
 public:
  using Clock = std::function<std::int64_t()>;

  Coordinator(std::uint64_t delta_max, std::int64_t liveness_timeout_ms, Clock clock = steady_ms)
      : delta_max_(delta_max), liveness_timeout_ms_(liveness_timeout_ms), clock_(std::move(clock)) {}

  RegisterReply register_worker(const std::string& worker_id) {
    std::lock_guard lock(mutex_);
    auto& w = workers_[worker_id];
    w.incarnation = ++incarnations_;
    w.version.reset();
    w.degraded = false;
    w.last_seen_ms = clock_();
    refresh();
    return {w.incarnation, t_train_};
  }

  /// Records a trainer step. Versions must not go backwards.
  std::optional<SyncCommand> report_train_step(ParamVersion v) {
    std::lock_guard lock(mutex_);
    if (v < t_train_) {
      throw ConflictError("train step v" + v.str() + " is older than t_train v" + t_train_.str());
    }
    t_train_ = v;
    refresh();
    return in_flight_;
  }

  /// Records the version a worker now serves; it may not exceed t_train.
  void report_worker_version(const std::string& worker_id, ParamVersion v) {
    std::lock_guard lock(mutex_);
    auto& w = live_worker(worker_id);
    if (v > t_train_) {
      throw ConflictError("worker " + worker_id + " reports v" + v.str() + " beyond t_train v" + t_train_.str());
    }
    w.version = v;
    w.last_seen_ms = clock_();
    refresh();
  }

  /// Heartbeat plus long-poll: waits up to `wait` for a command the worker
  /// has not yet satisfied.
  PollReply poll(const std::string& worker_id, std::chrono::milliseconds wait = std::chrono::milliseconds{0}) {
    std::unique_lock lock(mutex_);
    live_worker(worker_id).last_seen_ms = clock_();
    refresh();
    auto pending = [&]() -> std::optional<SyncCommand> {
      auto it = workers_.find(worker_id);
      if (!in_flight_ || it == workers_.end() || it->second.degraded) return std::nullopt;
      const auto& w = it->second;
      if (w.version && *w.version >= in_flight_->target_version) return std::nullopt;
      return in_flight_;
    };
    cv_.wait_for(lock, wait, [&] { return pending().has_value(); });
    auto it = workers_.find(worker_id);
    if (it != workers_.end() && !it->second.degraded) it->second.last_seen_ms = clock_();
    return {pending(), t_train_};
  }

  SkewState skew() {
    std::lock_guard lock(mutex_);
    refresh();
    return {t_train_, t_infer_, delta_max_, last_sync_at_, rounds_issued_, rounds_completed_, in_flight_, workers_};
  }

  /// Applies liveness and round bookkeeping without any other event.
  void tick() {
    std::lock_guard lock(mutex_);
    refresh();
  }

 private:
  WorkerState& live_worker(const std::string& worker_id) {
    auto it = workers_.find(worker_id);
    if (it == workers_.end()) throw NotFoundError("worker " + worker_id + " is not registered");
    if (it->second.degraded) throw ConflictError("worker " + worker_id + " is degraded and must register again");
    return it->second;
  }

  void refresh() {
    const auto now = clock_();
    for (auto& [_, w] : workers_) {
      if (!w.degraded && now - w.last_seen_ms > liveness_timeout_ms_) w.degraded = true;
    }
    std::optional<ParamVersion> lowest;
    for (const auto& [_, w] : workers_) {
      if (w.degraded || !w.version) continue;
      if (!lowest || *w.version < *lowest) lowest = *w.version;
    }
    if (lowest) t_infer_ = *lowest;
    if (t_infer_ > t_train_) t_infer_ = t_train_;

    if (in_flight_) {
      bool converged = true;
      for (const auto& [_, w] : workers_) {
        if (!w.degraded && w.version && *w.version < in_flight_->target_version) converged = false;
      }
      if (converged) {
        in_flight_.reset();
        ++rounds_completed_;
        last_sync_at_ = now;
      }
    }
    if (!in_flight_ && lowest && t_train_.value - t_infer_.value > delta_max_) {
      in_flight_ = SyncCommand{++rounds_issued_, t_train_};
    }
    cv_.notify_all();
  }

  const std::uint64_t delta_max_;
  const std::int64_t liveness_timeout_ms_;
  Clock clock_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::map<std::string, WorkerState> workers_;
  std::uint64_t incarnations_ = 0;
  ParamVersion t_train_{0};
  ParamVersion t_infer_{0};
  std::int64_t last_sync_at_ = 0;
  std::uint64_t rounds_issued_ = 0;
  std::uint64_t rounds_completed_ = 0;
  std::optional<SyncCommand> in_flight_;
};

}  // namespace echo::coordinator
