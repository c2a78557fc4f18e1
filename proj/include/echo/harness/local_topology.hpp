// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "echo/buffer/buffer_service.hpp"
#include "echo/coordinator/coordinator_service.hpp"
#include "echo/store/snapshot_service.hpp"
#include "echo/trainer/trainer.hpp"
#include "echo/worker/inference_worker.hpp"

namespace echo::harness {

/// Every service of a run inside one process, talking over loopback HTTP.
/// Sequential mode serves the trajectory API from each worker; async mode
/// runs each worker's producer loop on its own thread.
class LocalTopology {
 public:
  LocalTopology(RunConfig cfg, std::size_t workers)
      : cfg_(std::move(cfg)),
        buffer_(cfg_.trainer_minibatch, cfg_.effective_buffer_capacity()),
        coordinator_(cfg_.delta_max, cfg_.liveness_timeout_ms),
        store_service_(store_),
        buffer_service_(buffer_),
        coordinator_service_(coordinator_) {
    validate(cfg_);
    if (cfg_.mode == SyncMode::kAsync && !coordinator::validate_alignment(cfg_.inference_batch, cfg_.trainer_minibatch)) {
      throw AlignmentError("inference_batch must be an integer multiple of trainer_minibatch");
    }
    store_service_.start();
    buffer_service_.start();
    coordinator_service_.start();
    for (std::size_t i = 0; i < workers; ++i) {
      slots_.push_back(std::make_unique<Slot>());
      start_worker(i);
    }
  }

  LocalTopology(const LocalTopology&) = delete;
  LocalTopology& operator=(const LocalTopology&) = delete;

  ~LocalTopology() {
    for (std::size_t i = 0; i < slots_.size(); ++i) kill_worker(i);
  }

  trainer::TrainerEndpoints endpoints() const {
    trainer::TrainerEndpoints e{store_service_.url(), {}, buffer_service_.url(), coordinator_service_.url()};
    for (const auto& s : slots_) {
      if (s->service) e.worker_urls.push_back(s->service->url());
    }
    return e;
  }

  static std::string worker_name(std::size_t i) { return "worker-" + std::to_string(i); }

  /// Stops worker i; in async mode its in-flight push completes first.
  void kill_worker(std::size_t i) {
    auto& s = *slots_.at(i);
    s.stop = true;
    if (s.thread.joinable()) s.thread.join();
    s.service.reset();
    s.worker.reset();
  }

  void start_worker(std::size_t i) {
    auto& s = *slots_.at(i);
    worker::WorkerOptions opt;
    opt.worker_id = worker_name(i);
    opt.run = cfg_;
    opt.snapshot_url = store_service_.url();
    opt.buffer_url = buffer_service_.url();
    opt.coordinator_url = coordinator_service_.url();
    s.worker = std::make_unique<worker::InferenceWorker>(opt);
    s.stop = false;
    if (cfg_.mode == SyncMode::kSequential) {
      s.service = std::make_unique<worker::WorkerService>(*s.worker);
      s.service->start();
    } else {
      s.thread = std::thread([&s] { s.worker->run_async_loop(s.stop); });
    }
  }

  store::SnapshotStore& store() { return store_; }
  buffer::ReplayBuffer& buffer() { return buffer_; }
  coordinator::Coordinator& coordinator() { return coordinator_; }
  worker::InferenceWorker* worker(std::size_t i) { return slots_.at(i)->worker.get(); }
  std::size_t worker_count() const { return slots_.size(); }
  const RunConfig& config() const { return cfg_; }

  /// Runs a trainer against this topology in the configured mode.
  trainer::TrainingLog train(std::uint64_t steps, trainer::TrainerOptions opt = {}) {
    trainer::Trainer t(cfg_, endpoints(), std::move(opt));
    trainer::TrainingLog log;
    if (cfg_.mode == SyncMode::kSequential) {
      t.train_sequential(steps, log);
    } else {
      t.train_async(steps, log);
    }
    return log;
  }

 private:
  struct Slot {
    std::unique_ptr<worker::InferenceWorker> worker;
    std::unique_ptr<worker::WorkerService> service;
    std::thread thread;
    std::atomic<bool> stop{false};
  };

  RunConfig cfg_;
  store::SnapshotStore store_;
  buffer::ReplayBuffer buffer_;
  coordinator::Coordinator coordinator_;
  store::SnapshotService store_service_;
  buffer::BufferService buffer_service_;
  coordinator::CoordinatorService coordinator_service_;
  std::vector<std::unique_ptr<Slot>> slots_;
};

}  // namespace echo::harness
