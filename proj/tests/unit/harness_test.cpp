// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "echo/harness/oracle.hpp"
#include "echo/harness/reports.hpp"

namespace echo::harness {
namespace {

using trainer::StepRecord;

std::vector<StepRecord> flat_log(std::size_t steps, double value) {
  std::vector<StepRecord> log(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    log[i].step = i;
    log[i].version = ParamVersion{i + 1};
    log[i].mean_return = value;
  }
  return log;
}

TEST(Oracle, SameConfigGivesIdenticalTrails) {
  RunConfig cfg;
  const auto a = run_monolithic_oracle(cfg, 4);
  const auto b = run_monolithic_oracle(cfg, 4);
  const auto eq = verify_equivalence(a.trail, b.trail, 0);
  EXPECT_TRUE(eq.pass);
  EXPECT_TRUE(eq.exact);
  EXPECT_EQ(eq.versions_compared, 5u);
}

TEST(Oracle, ZeroLearningRateKeepsTrailFlat) {
  RunConfig cfg;
  cfg.learning_rate = 0.0;
  const auto log = run_monolithic_oracle(cfg, 3);
  for (const auto& p : log.trail) EXPECT_EQ(trainer::flatten(p), trainer::flatten(log.trail[0]));
  EXPECT_EQ(log.trail.back().version, ParamVersion{3});
}

TEST(Oracle, SequentialLogHasNoStaleness) {
  const auto log = run_monolithic_oracle(RunConfig{}, 3);
  const auto audit = audit_staleness(log.steps, 1);
  EXPECT_TRUE(audit.pass);
  EXPECT_EQ(audit.max_observed, 0u);
  EXPECT_EQ(audit.histogram.size(), 1u);
}

TEST(Equivalence, RefusesRunsWithAReloadThreshold) {
  const auto t = run_monolithic_oracle(RunConfig{}, 1).trail;
  EXPECT_THROW(verify_equivalence(t, t, 2), ContractViolation);
  EXPECT_THROW(verify_equivalence(t, t, 0, 1e-9), ContractViolation);
  EXPECT_TRUE(verify_equivalence(t, t, 0, 1e-12).pass);
}

TEST(Equivalence, PerturbedSeedFailsAtFirstUpdate) {
  RunConfig a;
  RunConfig b = a;
  b.seed = a.seed + 1;
  const auto r = verify_equivalence(run_monolithic_oracle(a, 3).trail, run_monolithic_oracle(b, 3).trail, 0);
  EXPECT_FALSE(r.pass);
  ASSERT_TRUE(r.first_divergent_version);
  EXPECT_EQ(*r.first_divergent_version, 1u);
  EXPECT_EQ(r.max_abs_diff[0], 0.0);
}

TEST(Equivalence, LengthMismatchIsStructural) {
  const auto t = run_monolithic_oracle(RunConfig{}, 2).trail;
  auto shorter = t;
  shorter.pop_back();
  const auto r = verify_equivalence(t, shorter, 0);
  EXPECT_FALSE(r.pass);
  EXPECT_FALSE(r.structural_error.empty());
}

TEST(Staleness, BoundIsDeltaPlusOne) {
  std::vector<StepRecord> log(2);
  log[0].staleness_histogram = {{0, 4}, {3, 2}};
  log[1].staleness_histogram = {{5, 1}};
  auto r = audit_staleness(log, 4);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.bound, 5u);
  EXPECT_EQ(r.samples, 7u);
  EXPECT_EQ(r.max_observed, 5u);
  r = audit_staleness(log, 2);
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(r.violations, 1u);
  r = audit_staleness(log, 1);
  EXPECT_EQ(r.violations, 3u);
}

TEST(Convergence, NeedsThreeSeedsPerSide) {
  std::vector<std::vector<StepRecord>> two(2, flat_log(20, 1.0)), three(3, flat_log(20, 1.0));
  EXPECT_THROW(compare_convergence(two, three, 10, 0.1), ContractViolation);
  EXPECT_THROW(compare_convergence(three, two, 10, 0.1), ContractViolation);
  EXPECT_TRUE(compare_convergence(three, three, 10, 0.1).pass);
}

TEST(Convergence, RelativeToleranceOnWindowMeans) {
  // Window means: a = 2.0 on every seed; b seeds at 2.1, 2.2, 2.3 -> 2.2.
  std::vector<std::vector<StepRecord>> a(3, flat_log(30, 2.0)), b;
  for (double v : {2.1, 2.2, 2.3}) {
    auto log = flat_log(30, -50.0);
    for (std::size_t i = 20; i < 30; ++i) log[i].mean_return = v;
    b.push_back(log);
  }
  auto r = compare_convergence(a, b, 10, 0.10);
  EXPECT_NEAR(r.mean_b, 2.2, 1e-12);
  EXPECT_NEAR(r.abs_diff, 0.2, 1e-12);
  EXPECT_NEAR(r.allowed, 0.22, 1e-12);
  EXPECT_TRUE(r.pass);
  r = compare_convergence(a, b, 10, 0.05);
  EXPECT_FALSE(r.pass);
  // The early -50 steps sit outside a 10-step window but inside a 20-step one.
  EXPECT_FALSE(compare_convergence(a, b, 20, 0.10).pass);
}

TEST(Convergence, UnequalStepCountsAreRefused) {
  std::vector<std::vector<StepRecord>> a(3, flat_log(20, 1.0)), b(3, flat_log(20, 1.0));
  b[1].pop_back();
  EXPECT_THROW(compare_convergence(a, b, 10, 0.1), ContractViolation);
  EXPECT_THROW(final_window_mean(flat_log(5, 1.0), 6), ContractViolation);
}

TEST(TrainingLog, JsonLinesRoundTrip) {
  const auto log = run_monolithic_oracle(RunConfig{}, 2);
  const auto path = (std::filesystem::temp_directory_path() / "echo_harness_test_log.jsonl").string();
  trainer::write_jsonl(path, log.steps);
  const auto back = trainer::read_jsonl(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].mean_return, log.steps[1].mean_return);
  EXPECT_EQ(back[1].version, log.steps[1].version);
  EXPECT_EQ(back[1].staleness_histogram, log.steps[1].staleness_histogram);

  const auto trail_path = (std::filesystem::temp_directory_path() / "echo_harness_test_trail.json").string();
  trainer::write_trail(trail_path, log.trail);
  EXPECT_TRUE(verify_equivalence(log.trail, trainer::read_trail(trail_path), 0).exact);
  std::filesystem::remove(path);
  std::filesystem::remove(trail_path);
}

TEST(Junit, CountsFailuresAndEscapes) {
  const auto path = (std::filesystem::temp_directory_path() / "echo_harness_test_junit.xml").string();
  write_junit(path, "suite", {{"ok", true, "", 0.5}, {"bad", false, "a < b & c", 0.1}});
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto xml = ss.str();
  EXPECT_NE(xml.find("tests=\"2\" failures=\"1\""), std::string::npos);
  EXPECT_NE(xml.find("a &lt; b &amp; c"), std::string::npos);
  std::filesystem::remove(path);
}

// Learning signal over a full-length run, averaged across seeds: the last
// 20 steps beat the first 20.
TEST(Oracle, SokobanReturnImprovesOverTraining) {
  constexpr int kSeeds = 5;
  constexpr std::uint64_t kSteps = 200;
  double first = 0.0, last = 0.0;
  for (int seed = 0; seed < kSeeds; ++seed) {
    RunConfig cfg;
    cfg.seed = seed;
    const auto log = run_monolithic_oracle(cfg, kSteps);
    for (std::size_t i = 0; i < 20; ++i) {
      first += log.steps[i].mean_return / (20.0 * kSeeds);
      last += log.steps[kSteps - 20 + i].mean_return / (20.0 * kSeeds);
    }
  }
  EXPECT_GT(last, first);
}

}  // namespace
}  // namespace echo::harness
