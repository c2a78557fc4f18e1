// SPDX-License-Identifier: Apache-2.0
// Separate OS processes of the `echo` binary, driven through the harness
// classes and through the command line.
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include <gtest/gtest.h>

#include "echo/harness/oracle.hpp"
#include "echo/harness/process_topology.hpp"
#include "echo/harness/reports.hpp"

namespace echo::harness {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("echo_process_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const auto cmd = std::string(ECHO_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(ProcessTopology, SequentialMatchesOracleAcrossProcesses) {
  RunConfig cfg;
  TopologySpec spec;
  spec.workers = 2;
  trainer::TrainingLog log;
  {
    ProcessTopology topo(spec, cfg, ECHO_CLI);
    trainer::Trainer t(cfg, topo.endpoints());
    t.train_sequential(5, log);
  }
  const auto oracle = run_monolithic_oracle(cfg, 5);
  const auto eq = verify_equivalence(oracle.trail, log.trail, 0);
  EXPECT_TRUE(eq.pass && eq.exact);
}

TEST(ProcessTopology, KilledWorkerRejoinsAndLedgerBalances) {
  RunConfig cfg;
  cfg.mode = SyncMode::kAsync;
  cfg.delta_max = 1;
  cfg.rollout_n = 4;
  cfg.trainer_minibatch = 16;
  cfg.inference_batch = 32;
  cfg.buffer_capacity = 64;
  TopologySpec spec;
  spec.workers = 2;
  ProcessTopology topo(spec, cfg, ECHO_CLI);
  trainer::TrainerOptions opt;
  std::thread restarter;
  opt.on_step = [&](const trainer::StepRecord& r) {
    if (r.step == 4) {
      topo.kill_worker(0);  // SIGKILL, no goodbye
      restarter = std::thread([&] {
        std::this_thread::sleep_for(std::chrono::milliseconds{300});
        topo.start_worker(0);
      });
    }
  };
  trainer::Trainer t(cfg, topo.endpoints(), opt);
  trainer::TrainingLog log;
  t.train_async(20, log);
  if (restarter.joinable()) restarter.join();
  ASSERT_EQ(log.steps.size(), 20u);
  EXPECT_TRUE(audit_staleness(log.steps, cfg.delta_max).pass);

  std::set<std::pair<std::string, std::uint64_t>> seen;
  for (const auto& step : log.steps) {
    std::set<std::pair<std::string, std::uint64_t>> in_step;
    for (const auto& e : step.ledger) in_step.insert({e.worker_id, e.prompt_id});
    for (const auto& key : in_step) EXPECT_TRUE(seen.insert(key).second);
  }
  const auto stats = buffer::BufferClient(*topo.endpoints().buffer_url).stats();
  EXPECT_EQ(stats.pushed_total, stats.pulled_total + stats.evicted_total + stats.resident);
  const auto skew = coordinator::CoordinatorClient(*topo.endpoints().coordinator_url).skew();
  EXPECT_GE(skew.at("workers").at("worker-0").at("incarnation").get<std::uint64_t>(), 2u);
}

TEST(Cli, HarnessRunWritesReports) {
  const auto dir = scratch("run");
  ASSERT_EQ(run_cli("harness run --config " + std::string(ECHO_CONFIGS) + "/sequential.json --steps 3 --quiet --out-dir " +
                    dir.string()),
            0);
  for (const char* f : {"log.jsonl", "trail.json", "staleness.json", "equivalence.json", "summary.json", "junit.xml"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  const auto log = trainer::read_jsonl((dir / "log.jsonl").string());
  EXPECT_EQ(log.size(), 3u);
  EXPECT_EQ(run_cli("harness audit --delta-max 1 --log " + (dir / "log.jsonl").string()), 0);
  EXPECT_EQ(run_cli("harness equivalence --oracle-trail " + (dir / "oracle_trail.json").string() + " --trail " +
                    (dir / "trail.json").string()),
            0);
  EXPECT_EQ(run_cli("harness equivalence --threshold 1 --oracle-trail " + (dir / "oracle_trail.json").string() +
                    " --trail " + (dir / "trail.json").string()),
            2);
  // Two seeds per side is not enough.
  const auto l = (dir / "log.jsonl").string();
  EXPECT_EQ(run_cli("harness compare --window 2 --a " + l + " " + l + " --b " + l + " " + l), 2);
  EXPECT_EQ(run_cli("harness compare --window 2 --a " + l + " " + l + " " + l + " --b " + l + " " + l + " " + l), 0);
  fs::remove_all(dir);
}

TEST(Cli, AsyncRunAndAudit) {
  const auto dir = scratch("async");
  ASSERT_EQ(run_cli("harness run --config " + std::string(ECHO_CONFIGS) + "/async.json --topology " +
                    std::string(ECHO_CONFIGS) + "/topology.json --steps 8 --quiet --out-dir " + dir.string()),
            0);
  const auto audit = audit_staleness(trainer::read_jsonl((dir / "log.jsonl").string()), 1);
  EXPECT_TRUE(audit.pass);
  EXPECT_EQ(audit.samples, 8u * 96u);
  fs::remove_all(dir);
}

TEST(Cli, PlanAndProbe) {
  EXPECT_EQ(run_cli("harness plan --devices " + std::string(ECHO_CONFIGS) + "/devices.json --layers " +
                    std::string(ECHO_CONFIGS) + "/layers.json"),
            0);
  EXPECT_EQ(run_cli("harness probe --fixed-profile f=10,m=1000"), 0);
  EXPECT_NE(run_cli("harness probe --fixed-profile f=-1,m=1000"), 0);
  EXPECT_NE(run_cli("harness nonsense"), 0);
}

}  // namespace
}  // namespace echo::harness
