// SPDX-License-Identifier: Apache-2.0
#include <iostream>
#include <memory>
#include <optional>
#include <thread>

#include "cli.hpp"
#include "echo/buffer/buffer_service.hpp"
#include "echo/coordinator/coordinator_service.hpp"
#include "echo/store/snapshot_service.hpp"
#include "echo/worker/inference_worker.hpp"

namespace echo::cli {
namespace {

struct Listen {
  std::string host = "127.0.0.1";
  int port = 0;
};

void add_listen(CLI::App* cmd, Listen& l) {
  cmd->add_option("--host", l.host, "Address to bind")->capture_default_str();
  cmd->add_option("--port", l.port, "Port to bind (0 picks a free one)")->capture_default_str();
}

// Serves until SIGINT/SIGTERM.
void serve(net::Service& svc, const Listen& l, const std::string& name) {
  const int port = svc.start(l.host, l.port);
  std::cout << name << " listening on " << net::Url{l.host, port}.str() << std::endl;
  block_until_signalled();
  svc.stop();
}

RunConfig config_or_default(const std::string& path) { return path.empty() ? RunConfig{} : load_run_config(path); }

}  // namespace

void add_service_commands(CLI::App& app) {
  {
    auto* cmd = app.add_subcommand("snapshot-store", "Versioned policy snapshot store");
    auto l = std::make_shared<Listen>();
    auto dir = std::make_shared<std::string>();
    add_listen(cmd, *l);
    cmd->add_option("--data-dir", *dir, "Directory for the append-only snapshot log (in-memory if unset)");
    cmd->callback([l, dir] {
      auto store = dir->empty() ? std::make_unique<store::SnapshotStore>() : std::make_unique<store::SnapshotStore>(*dir);
      store::SnapshotService svc(*store);
      serve(svc, *l, "snapshot-store");
    });
  }
  {
    auto* cmd = app.add_subcommand("replay-buffer", "Version-tagged rollout buffer");
    auto l = std::make_shared<Listen>();
    auto config = std::make_shared<std::string>();
    add_listen(cmd, *l);
    cmd->add_option("--config", *config, "Run config (trainer_minibatch, buffer_capacity)")->check(CLI::ExistingFile);
    cmd->callback([l, config] {
      const auto cfg = config_or_default(*config);
      buffer::ReplayBuffer buf(cfg.trainer_minibatch, cfg.effective_buffer_capacity());
      buffer::BufferService svc(buf);
      serve(svc, *l, "replay-buffer");
    });
  }
  {
    auto* cmd = app.add_subcommand("coordinator", "Staleness coordinator for async mode");
    auto l = std::make_shared<Listen>();
    auto config = std::make_shared<std::string>();
    add_listen(cmd, *l);
    cmd->add_option("--config", *config, "Run config (delta_max, liveness_timeout_ms, batch sizes)")
        ->check(CLI::ExistingFile);
    cmd->callback([l, config] {
      const auto cfg = config_or_default(*config);
      if (!coordinator::validate_alignment(cfg.inference_batch, cfg.trainer_minibatch)) {
        throw AlignmentError("inference_batch must be an integer multiple of trainer_minibatch");
      }
      coordinator::Coordinator c(cfg.delta_max, cfg.liveness_timeout_ms);
      coordinator::CoordinatorService svc(c);
      serve(svc, *l, "coordinator");
    });
  }
  {
    auto* cmd = app.add_subcommand("inference-worker", "Trajectory API (sequential) or rollout producer (async)");
    struct Opts {
      Listen listen;
      std::string mode = "sequential", config, worker_id = "worker-0";
      std::string snapshot_url, buffer_url, coordinator_url;
      std::optional<std::uint64_t> gap;
      std::optional<std::int64_t> seed;
    };
    auto o = std::make_shared<Opts>();
    add_listen(cmd, o->listen);
    cmd->add_option("--mode", o->mode, "sequential or async")
        ->check(CLI::IsMember({"sequential", "async"}))
        ->envname("ECHO_MODE")
        ->capture_default_str();
    cmd->add_option("--config", o->config, "Run config file")->check(CLI::ExistingFile)->envname("ECHO_CONFIG");
    cmd->add_option("--worker-id", o->worker_id, "Worker identity")->envname("ECHO_WORKER_ID")->capture_default_str();
    cmd->add_option("--snapshot-url", o->snapshot_url, "Snapshot store URL")->envname("ECHO_SNAPSHOT_URL");
    cmd->add_option("--buffer-url", o->buffer_url, "Replay buffer URL (async)")->envname("ECHO_BUFFER_URL");
    cmd->add_option("--coordinator-url", o->coordinator_url, "Coordinator URL (async)")
        ->envname("ECHO_COORDINATOR_URL");
    cmd->add_option("--version-gap-threshold", o->gap, "Reload when |caller - resident| exceeds this")
        ->envname("ECHO_VERSION_GAP_THRESHOLD");
    cmd->add_option("--seed", o->seed, "Run seed")->envname("ECHO_SEED");
    cmd->callback([o] {
      worker::WorkerOptions opt;
      opt.worker_id = o->worker_id;
      opt.run = config_or_default(o->config);
      opt.run.mode = o->mode == "async" ? SyncMode::kAsync : SyncMode::kSequential;
      if (o->gap) opt.run.version_gap_threshold = *o->gap;
      if (o->seed) opt.run.seed = *o->seed;
      if (o->snapshot_url.empty()) throw SchemaError("--snapshot-url is required");
      opt.snapshot_url = net::parse_url(o->snapshot_url);
      if (!o->buffer_url.empty()) opt.buffer_url = net::parse_url(o->buffer_url);
      if (!o->coordinator_url.empty()) opt.coordinator_url = net::parse_url(o->coordinator_url);
      worker::InferenceWorker w(opt);
      worker::WorkerService svc(w);
      const int port = svc.start(o->listen.host, o->listen.port);
      std::cout << "inference-worker " << opt.worker_id << " (" << o->mode << ") listening on "
                << net::Url{o->listen.host, port}.str() << std::endl;
      if (opt.run.mode == SyncMode::kAsync) {
        w.run_async_loop(g_stop);
      } else {
        block_until_signalled();
      }
      svc.stop();
    });
  }
}

}  // namespace echo::cli
