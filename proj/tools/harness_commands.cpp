// SPDX-License-Identifier: Apache-2.0
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "cli.hpp"
#include "echo/harness/oracle.hpp"
#include "echo/harness/process_topology.hpp"
#include "echo/harness/reports.hpp"
#include "echo/placement/placement.hpp"
#include "echo/placement/probe.hpp"
#include "echo/trainer/trainer.hpp"

namespace echo::cli {
namespace {

namespace fs = std::filesystem;

RunConfig load_config(const std::string& path, const std::string& mode_override) {
  RunConfig cfg = path.empty() ? RunConfig{} : load_run_config(path);
  if (!mode_override.empty()) cfg.mode = sync_mode_from_string(mode_override);
  validate(cfg);
  return cfg;
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot read " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void print_step(const trainer::StepRecord& r) {
  std::uint64_t samples = 0;
  for (const auto& [k, n] : r.staleness_histogram) samples += n;
  std::cerr << "step " << r.step << " v" << r.version.value << " mean_return " << r.mean_return << " samples "
            << samples << " " << r.wall_ms << "ms\n";
}

// Runs the trainer in the configured mode. The partial log is kept on abort.
trainer::TrainingLog run_trainer(const RunConfig& cfg, trainer::TrainerEndpoints ep, std::uint64_t steps,
                                 bool quiet, std::exception_ptr& failure) {
  trainer::TrainerOptions opt;
  if (!quiet) opt.on_step = print_step;
  trainer::Trainer t(cfg, std::move(ep), opt);
  trainer::TrainingLog log;
  try {
    if (cfg.mode == SyncMode::kSequential) {
      t.train_sequential(steps, log);
    } else {
      t.train_async(steps, log);
    }
  } catch (...) {
    failure = std::current_exception();
  }
  return log;
}

struct TrainerArgs {
  std::string mode, config, out, trail;
  std::uint64_t steps = 0;
  std::string snapshot_url, buffer_url, coordinator_url;
  std::vector<std::string> worker_urls;
  bool quiet = false;
};

struct RunArgs {
  std::string topology, config, mode, out_dir = "run";
  std::uint64_t steps = 100;
  bool quiet = false;
};

void harness_run(const RunArgs& a) {
  const auto cfg = load_config(a.config, a.mode);
  const auto spec = a.topology.empty() ? harness::TopologySpec{} : harness::load_topology(a.topology);
  fs::create_directories(a.out_dir);
  const fs::path out(a.out_dir);

  std::vector<harness::CaseResult> cases;
  auto timed = [](auto&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  trainer::TrainingLog log;
  std::exception_ptr failure;
  nlohmann::json topology;
  const double train_s = timed([&] {
    harness::ProcessTopology topo(spec, cfg);
    topology = topo.describe();
    log = run_trainer(cfg, topo.endpoints(), a.steps, a.quiet, failure);
  });
  trainer::write_jsonl((out / "log.jsonl").string(), log.steps);
  trainer::write_trail((out / "trail.json").string(), log.trail);
  std::string train_msg;
  if (failure) {
    try {
      std::rethrow_exception(failure);
    } catch (const std::exception& e) {
      train_msg = e.what();
    }
  }
  cases.push_back({"train_" + to_string(cfg.mode), !failure && log.steps.size() == a.steps, train_msg, train_s});

  const auto audit = harness::audit_staleness(log.steps, cfg.delta_max);
  write_json(out / "staleness.json", harness::to_json(audit));
  cases.push_back({"staleness_bound", audit.pass,
                   audit.pass ? "" : std::to_string(audit.violations) + " samples above " + std::to_string(audit.bound),
                   0.0});

  nlohmann::json summary{{"mode", to_string(cfg.mode)},
                         {"steps_requested", a.steps},
                         {"steps_completed", log.steps.size()},
                         {"train_seconds", train_s},
                         {"topology", topology},
                         {"staleness", harness::to_json(audit)}};
  if (!log.steps.empty()) {
    summary["final_window_mean"] = harness::final_window_mean(log.steps, std::min<std::size_t>(20, log.steps.size()));
  }

  if (cfg.mode == SyncMode::kSequential && cfg.version_gap_threshold == 0 && !failure) {
    harness::EquivalenceReport eq;
    const double oracle_s = timed([&] {
      const auto oracle = harness::run_monolithic_oracle(cfg, a.steps);
      trainer::write_trail((out / "oracle_trail.json").string(), oracle.trail);
      eq = harness::verify_equivalence(oracle.trail, log.trail, cfg.version_gap_threshold);
    });
    write_json(out / "equivalence.json", harness::to_json(eq));
    summary["equivalence"] = harness::to_json(eq);
    std::string msg;
    if (!eq.pass) {
      msg = !eq.structural_error.empty() ? eq.structural_error
                                         : "diverged at version " + std::to_string(*eq.first_divergent_version);
    }
    cases.push_back({"oracle_equivalence", eq.pass, msg, oracle_s});
  }

  write_json(out / "summary.json", summary);
  harness::write_junit((out / "junit.xml").string(), "harness-run", cases);
  std::cout << summary.dump(2) << std::endl;
  for (const auto& c : cases) {
    if (!c.pass) throw CheckFailed{c.name + ": " + c.message};
  }
}

}  // namespace

void add_trainer_command(CLI::App& app) {
  auto* cmd = app.add_subcommand("trainer", "Training swarm: drives GRPO updates against running services");
  auto a = std::make_shared<TrainerArgs>();
  cmd->add_option("--mode", a->mode, "sequential | async (overrides the config)");
  cmd->add_option("--config", a->config, "Run config JSON")->check(CLI::ExistingFile);
  cmd->add_option("--steps", a->steps, "Optimisation steps")->required();
  cmd->add_option("--out", a->out, "Training log (JSON lines)")->required();
  cmd->add_option("--trail", a->trail, "Write the parameter trail here");
  cmd->add_option("--snapshot-url", a->snapshot_url, "Snapshot store URL")->envname("ECHO_SNAPSHOT_URL")->required();
  cmd->add_option("--worker-url", a->worker_urls, "Inference worker URL (sequential mode, repeatable)");
  cmd->add_option("--buffer-url", a->buffer_url, "Replay buffer URL (async mode)")->envname("ECHO_BUFFER_URL");
  cmd->add_option("--coordinator-url", a->coordinator_url, "Coordinator URL (async mode)")
      ->envname("ECHO_COORDINATOR_URL");
  cmd->add_flag("--quiet", a->quiet, "No per-step progress on stderr");
  cmd->callback([a] {
    const auto cfg = load_config(a->config, a->mode);
    trainer::TrainerEndpoints ep;
    ep.snapshot_url = net::parse_url(a->snapshot_url);
    for (const auto& u : a->worker_urls) ep.worker_urls.push_back(net::parse_url(u));
    if (!a->buffer_url.empty()) ep.buffer_url = net::parse_url(a->buffer_url);
    if (!a->coordinator_url.empty()) ep.coordinator_url = net::parse_url(a->coordinator_url);
    if (cfg.mode == SyncMode::kAsync && (!ep.buffer_url || !ep.coordinator_url)) {
      throw ContractViolation("async mode needs --buffer-url and --coordinator-url");
    }
    std::exception_ptr failure;
    const auto log = run_trainer(cfg, std::move(ep), a->steps, a->quiet, failure);
    trainer::write_jsonl(a->out, log.steps);
    if (!a->trail.empty()) trainer::write_trail(a->trail, log.trail);
    if (failure) std::rethrow_exception(failure);
  });
}

void add_harness_command(CLI::App& app) {
  auto* harness = app.add_subcommand("harness", "Bring up topologies, run experiments, check reports");
  harness->require_subcommand(1);

  {
    auto* cmd = harness->add_subcommand("up", "Start store, buffer, coordinator and workers; print their URLs");
    auto topology = std::make_shared<std::string>();
    auto config = std::make_shared<std::string>();
    auto mode = std::make_shared<std::string>();
    cmd->add_option("--topology", *topology, "Topology JSON")->check(CLI::ExistingFile);
    cmd->add_option("--config", *config, "Run config JSON")->check(CLI::ExistingFile);
    cmd->add_option("--mode", *mode, "sequential | async (overrides the config)");
    cmd->callback([topology, config, mode] {
      const auto cfg = load_config(*config, *mode);
      harness::ProcessTopology topo(topology->empty() ? harness::TopologySpec{} : harness::load_topology(*topology),
                                    cfg);
      std::cout << topo.describe().dump(2) << std::endl;
      block_until_signalled();
    });
  }
  {
    auto* cmd = harness->add_subcommand("run", "Run a trainer against a fresh process topology and write reports");
    auto a = std::make_shared<RunArgs>();
    cmd->add_option("--topology", a->topology, "Topology JSON")->check(CLI::ExistingFile);
    cmd->add_option("--config", a->config, "Run config JSON")->check(CLI::ExistingFile);
    cmd->add_option("--mode", a->mode, "sequential | async (overrides the config)");
    cmd->add_option("--steps", a->steps, "Optimisation steps")->capture_default_str();
    cmd->add_option("--out-dir", a->out_dir, "Directory for logs and reports")->capture_default_str();
    cmd->add_flag("--quiet", a->quiet, "No per-step progress on stderr");
    cmd->callback([a] { harness_run(*a); });
  }
  {
    auto* cmd = harness->add_subcommand("audit", "Staleness audit of a training log");
    auto log = std::make_shared<std::string>();
    auto delta = std::make_shared<std::uint64_t>(1);
    cmd->add_option("--log", *log, "Training log (JSON lines)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--delta-max", *delta, "Coordinator delta_max of the run")->capture_default_str();
    cmd->callback([log, delta] {
      const auto r = harness::audit_staleness(trainer::read_jsonl(*log), *delta);
      std::cout << harness::to_json(r).dump(2) << std::endl;
      if (!r.pass) throw CheckFailed{std::to_string(r.violations) + " samples exceed staleness " + std::to_string(r.bound)};
    });
  }
  {
    auto* cmd = harness->add_subcommand("compare", "Final-window return parity between two sets of runs");
    auto a = std::make_shared<std::vector<std::string>>();
    auto b = std::make_shared<std::vector<std::string>>();
    auto window = std::make_shared<std::size_t>(20);
    auto tol = std::make_shared<double>(0.10);
    auto diagnostic = std::make_shared<bool>(false);
    cmd->add_option("--a", *a, "Logs of run set A, one per seed")->required()->check(CLI::ExistingFile);
    cmd->add_option("--b", *b, "Logs of run set B, one per seed")->required()->check(CLI::ExistingFile);
    cmd->add_option("--window", *window, "Final steps averaged")->capture_default_str();
    cmd->add_option("--tolerance", *tol, "Relative tolerance")->capture_default_str();
    cmd->add_flag("--diagnostic", *diagnostic, "Report only; never fail");
    cmd->callback([a, b, window, tol, diagnostic] {
      std::vector<std::vector<trainer::StepRecord>> runs_a, runs_b;
      for (const auto& p : *a) runs_a.push_back(trainer::read_jsonl(p));
      for (const auto& p : *b) runs_b.push_back(trainer::read_jsonl(p));
      const auto r = harness::compare_convergence(runs_a, runs_b, *window, *tol);
      std::cout << harness::to_json(r).dump(2) << std::endl;
      if (!r.pass && !*diagnostic) throw CheckFailed{"final-window means differ by more than the tolerance"};
    });
  }
  {
    auto* cmd = harness->add_subcommand("oracle", "Single-process baseline run");
    auto config = std::make_shared<std::string>();
    auto steps = std::make_shared<std::uint64_t>(100);
    auto out = std::make_shared<std::string>();
    auto trail = std::make_shared<std::string>();
    cmd->add_option("--config", *config, "Run config JSON")->check(CLI::ExistingFile);
    cmd->add_option("--steps", *steps, "Optimisation steps")->capture_default_str();
    cmd->add_option("--out", *out, "Training log (JSON lines)")->required();
    cmd->add_option("--trail", *trail, "Write the parameter trail here");
    cmd->callback([config, steps, out, trail] {
      const auto log = harness::run_monolithic_oracle(load_config(*config, ""), *steps);
      trainer::write_jsonl(*out, log.steps);
      if (!trail->empty()) trainer::write_trail(*trail, log.trail);
    });
  }
  {
    auto* cmd = harness->add_subcommand("equivalence", "Compare a parameter trail against the oracle's");
    auto oracle = std::make_shared<std::string>();
    auto trail = std::make_shared<std::string>();
    auto threshold = std::make_shared<std::uint64_t>(0);
    auto tol = std::make_shared<double>(0.0);
    cmd->add_option("--oracle-trail", *oracle, "Oracle trail JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--trail", *trail, "Candidate trail JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--threshold", *threshold, "version_gap_threshold the candidate ran with")->capture_default_str();
    cmd->add_option("--tolerance", *tol, "Max-abs tolerance (0 demands bit equality; at most 1e-12)")
        ->capture_default_str();
    cmd->callback([oracle, trail, threshold, tol] {
      const auto r = harness::verify_equivalence(trainer::read_trail(*oracle), trainer::read_trail(*trail),
                                                 *threshold, *tol);
      std::cout << harness::to_json(r).dump(2) << std::endl;
      if (!r.pass) throw CheckFailed{"trails differ"};
    });
  }
  {
    auto* cmd = harness->add_subcommand("plan", "Partition layers into pipeline stages over devices");
    auto devices = std::make_shared<std::string>();
    auto layers = std::make_shared<std::string>();
    auto json_only = std::make_shared<bool>(false);
    cmd->add_option("--devices", *devices, "Device manifest JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--layers", *layers, "Layer manifest JSON")->required()->check(CLI::ExistingFile);
    cmd->add_flag("--json", *json_only, "Print only the JSON plan");
    cmd->callback([devices, layers, json_only] {
      const auto devs = placement::devices_from_json(read_json(*devices));
      const auto manifest = placement::layers_from_json(read_json(*layers));
      const auto plan = placement::plan_stages(manifest.costs, manifest.mem, devs);
      std::cout << placement::to_json(plan).dump(2) << std::endl;
      if (!*json_only) std::cout << placement::render_table(plan);
    });
  }
  {
    auto* cmd = harness->add_subcommand("probe", "Measure this host's throughput and free memory");
    auto fixed = std::make_shared<std::string>();
    auto id = std::make_shared<std::string>("local");
    cmd->add_option("--fixed-profile", *fixed, "Use f=<ops/s>,m=<bytes> instead of measuring");
    cmd->add_option("--device-id", *id, "Device id to report")->capture_default_str();
    cmd->callback([fixed, id] {
      const auto d = placement::probe_device(fixed->empty() ? std::nullopt : std::optional<std::string>(*fixed), *id);
      if (!d) {
        std::cerr << "warning: probe failed, device excluded\n";
        throw CheckFailed{"probe failed"};
      }
      std::cout << placement::to_json(*d).dump(2) << std::endl;
    });
  }
}

}  // namespace echo::cli
