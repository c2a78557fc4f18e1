// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "echo/core/error.hpp"
#include "echo/core/param_version.hpp"
#include "echo/core/trajectory.hpp"

namespace echo::buffer {

/// One trajectory handed to the trainer, with the coordinates of where it
/// came from. (sequence_no, offset) identifies it uniquely.
struct ConsumedTrajectory {
  Trajectory trajectory;
  ParamVersion param_version;
  std::uint64_t prompt_id = 0;
  std::string worker_id;
  std::uint64_t sequence_no = 0;
  std::uint32_t offset = 0;
};

struct PushOutcome {
  bool accepted = false;
  std::uint64_t sequence_no = 0;
  std::uint32_t retry_after_ms = 0;
};

struct PullOutcome {
  std::vector<ConsumedTrajectory> trajectories;
  std::uint32_t wait_hint_ms = 0;

  bool empty() const { return trajectories.empty(); }
};

struct BufferStats {
  std::uint64_t resident = 0;
  std::uint64_t pushed_total = 0;
  std::uint64_t pulled_total = 0;
  std::uint64_t evicted_total = 0;
  std::map<std::uint64_t, std::uint64_t> version_histogram;  // resident trajectories per version
};

inline nlohmann::json to_json(const BufferStats& s) {
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [v, n] : s.version_histogram) hist[std::to_string(v)] = n;
  return {{"resident", s.resident},
          {"pushed_total", s.pushed_total},
          {"pulled_total", s.pulled_total},
          {"evicted_total", s.evicted_total},
          {"version_histogram", hist}};
}

inline BufferStats buffer_stats_from_json(const nlohmann::json& j) {
  BufferStats s;
  s.resident = j.at("resident").get<std::uint64_t>();
  s.pushed_total = j.at("pushed_total").get<std::uint64_t>();
  s.pulled_total = j.at("pulled_total").get<std::uint64_t>();
  s.evicted_total = j.at("evicted_total").get<std::uint64_t>();
  for (const auto& [k, n] : j.at("version_histogram").items()) {
    s.version_histogram[std::stoull(k)] = n.get<std::uint64_t>();
  }
  return s;
}

inline nlohmann::json to_json(const ConsumedTrajectory& c) {
  return {{"trajectory", to_json(c.trajectory)},
          {"param_version", version_to_wire(c.param_version)},
          {"prompt_id", c.prompt_id},
          {"worker_id", c.worker_id},
          {"sequence_no", c.sequence_no},
          {"offset", c.offset}};
}

inline ConsumedTrajectory consumed_from_json(const nlohmann::json& j) {
  ConsumedTrajectory c;
  c.trajectory = trajectory_from_json(j.at("trajectory"));
  c.param_version = version_from_wire(j.at("param_version"));
  c.prompt_id = j.at("prompt_id").get<std::uint64_t>();
  c.worker_id = j.at("worker_id").get<std::string>();
  c.sequence_no = j.at("sequence_no").get<std::uint64_t>();
  c.offset = j.at("offset").get<std::uint32_t>();
  return c;
}

/// FIFO of version-tagged rollout batches. Pushes must be whole multiples of
/// the trainer minibatch; every pull returns one minibatch cut from a single
/// push, so a minibatch never mixes parameter versions.
class ReplayBuffer {
 public:
  static constexpr std::uint32_t kRetryAfterMs = 50;
  static constexpr std::uint32_t kWaitHintMs = 25;

  ReplayBuffer(std::uint32_t trainer_minibatch, std::uint64_t capacity)
      : minibatch_(trainer_minibatch), capacity_(capacity) {
    if (minibatch_ == 0) throw ContractViolation("trainer_minibatch must be > 0");
    if (capacity_ < minibatch_) throw ContractViolation("buffer capacity must hold at least one minibatch");
  }

  std::uint32_t trainer_minibatch() const { return minibatch_; }
  std::uint64_t capacity() const { return capacity_; }

  /// Rejects misaligned batches with AlignmentError. When the batch does not
  /// fit, waits up to `wait` for room and otherwise reports retry_after_ms.
  PushOutcome push(RolloutBatch batch, std::chrono::milliseconds wait = std::chrono::milliseconds{0}) {
    validate(batch);
    const auto n = batch.trajectories.size();
    if (n % minibatch_ != 0) {
      throw AlignmentError("pushed batch of " + std::to_string(n) + " trajectories is not a multiple of trainer_minibatch " +
                           std::to_string(minibatch_));
    }
    if (n > capacity_) {
      throw ContractViolation("pushed batch of " + std::to_string(n) + " exceeds buffer capacity " +
                              std::to_string(capacity_));
    }
    std::unique_lock lock(mutex_);
    if (!cv_.wait_for(lock, wait, [&] { return resident_ + n <= capacity_; })) {
      return {false, 0, kRetryAfterMs};
    }
    const auto seq = next_seq_++;
    entries_.push_back({std::move(batch), seq, 0});
    resident_ += n;
    pushed_total_ += n;
    cv_.notify_all();
    return {true, seq, 0};
  }

  /// Returns the oldest minibatch whose version is >= min_version, waiting up
  /// to `wait` for one to arrive. Older, ineligible data stays resident until
  /// evict_stale removes it.
  PullOutcome pull(std::uint32_t n, ParamVersion min_version,
                   std::chrono::milliseconds wait = std::chrono::milliseconds{0}) {
    if (n != minibatch_) {
      throw ContractViolation("pull size " + std::to_string(n) + " differs from trainer_minibatch " +
                              std::to_string(minibatch_));
    }
    std::unique_lock lock(mutex_);
    Entry* found = nullptr;
    cv_.wait_for(lock, wait, [&] { return (found = oldest_eligible(min_version)) != nullptr; });
    if (found == nullptr) return {{}, kWaitHintMs};

    PullOutcome out;
    out.trajectories.reserve(n);
    const auto& b = found->batch;
    for (std::uint32_t k = 0; k < n; ++k) {
      const auto i = found->consumed + k;
      out.trajectories.push_back(
          {b.trajectories[i], b.param_version, b.prompt_of(i), b.worker_id, found->seq, static_cast<std::uint32_t>(i)});
    }
    found->consumed += n;
    resident_ -= n;
    pulled_total_ += n;
    drop_consumed();
    cv_.notify_all();
    return out;
  }

  /// Drops every resident trajectory older than min_version; returns how many.
  std::uint64_t evict_stale(ParamVersion min_version) {
    std::lock_guard lock(mutex_);
    std::uint64_t evicted = 0;
    for (auto it = entries_.begin(); it != entries_.end();) {
      if (it->batch.param_version < min_version) {
        evicted += remaining(*it);
        it = entries_.erase(it);
      } else {
        ++it;
      }
    }
    resident_ -= evicted;
    evicted_total_ += evicted;
    if (evicted > 0) cv_.notify_all();
    return evicted;
  }

  BufferStats stats() const {
    std::lock_guard lock(mutex_);
    BufferStats s{resident_, pushed_total_, pulled_total_, evicted_total_, {}};
    for (const auto& e : entries_) s.version_histogram[e.batch.param_version.value] += remaining(e);
    return s;
  }

 private:
  struct Entry {
    RolloutBatch batch;
    std::uint64_t seq = 0;
    std::size_t consumed = 0;
  };

  static std::size_t remaining(const Entry& e) { return e.batch.trajectories.size() - e.consumed; }

  Entry* oldest_eligible(ParamVersion min_version) {
    for (auto& e : entries_) {
      if (e.batch.param_version >= min_version && remaining(e) > 0) return &e;
    }
    return nullptr;
  }

  void drop_consumed() {
    std::erase_if(entries_, [](const Entry& e) { return remaining(e) == 0; });
  }

  const std::uint32_t minibatch_;
  const std::uint64_t capacity_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<Entry> entries_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t resident_ = 0;
  std::uint64_t pushed_total_ = 0;
  std::uint64_t pulled_total_ = 0;
  std::uint64_t evicted_total_ = 0;
};

}  // namespace echo::buffer
