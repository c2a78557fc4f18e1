// SPDX-License-Identifier: Apache-2.0
#include <thread>

#include <gtest/gtest.h>

#include "echo/coordinator/coordinator.hpp"

namespace echo::coordinator {
namespace {

using namespace std::chrono_literals;

struct FakeClock {
  std::int64_t now = 1000;
  Coordinator::Clock fn() {
    return [this] { return now; };
  }
};

TEST(Coordinator, AlignmentRule) {
  EXPECT_TRUE(validate_alignment(96, 96));
  EXPECT_TRUE(validate_alignment(192, 96));
  EXPECT_FALSE(validate_alignment(100, 96));
  EXPECT_FALSE(validate_alignment(48, 96));
  EXPECT_FALSE(validate_alignment(0, 96));
}

TEST(Coordinator, IssuesSyncOnlyBeyondDeltaMax) {
  FakeClock clock;
  Coordinator c(2, 10'000, clock.fn());
  c.register_worker("w0");
  c.report_worker_version("w0", ParamVersion{0});
  EXPECT_FALSE(c.report_train_step(ParamVersion{1}));
  EXPECT_FALSE(c.report_train_step(ParamVersion{2}));
  const auto cmd = c.report_train_step(ParamVersion{3});
  ASSERT_TRUE(cmd);
  EXPECT_EQ(cmd->target_version, ParamVersion{3});
  EXPECT_EQ(cmd->round, 1u);
}

TEST(Coordinator, OneRoundInFlight) {
  FakeClock clock;
  Coordinator c(1, 10'000, clock.fn());
  c.register_worker("w0");
  c.report_worker_version("w0", ParamVersion{0});
  const auto first = c.report_train_step(ParamVersion{2});
  const auto again = c.report_train_step(ParamVersion{3});
  ASSERT_TRUE(first && again);
  EXPECT_EQ(first->round, again->round);
  EXPECT_EQ(c.skew().rounds_issued, 1u);

  const auto poll = c.poll("w0");
  ASSERT_TRUE(poll.command);
  EXPECT_EQ(poll.t_train, ParamVersion{3});
  c.report_worker_version("w0", ParamVersion{3});
  const auto s = c.skew();
  EXPECT_EQ(s.rounds_completed, 1u);
  EXPECT_EQ(s.t_infer, ParamVersion{3});
  EXPECT_FALSE(s.in_flight);
  EXPECT_EQ(s.last_sync_at, clock.now);
  EXPECT_FALSE(c.poll("w0").command);
}

TEST(Coordinator, TInferIsMinimumOverLiveWorkers) {
  FakeClock clock;
  Coordinator c(5, 10'000, clock.fn());
  c.report_train_step(ParamVersion{4});
  c.register_worker("a");
  c.register_worker("b");
  c.report_worker_version("a", ParamVersion{4});
  c.report_worker_version("b", ParamVersion{2});
  EXPECT_EQ(c.skew().t_infer, ParamVersion{2});
  EXPECT_THROW(c.report_worker_version("a", ParamVersion{5}), ConflictError);
  EXPECT_THROW(c.report_worker_version("nobody", ParamVersion{0}), NotFoundError);
}

TEST(Coordinator, TrainVersionsAreMonotone) {
  Coordinator c(1, 10'000);
  c.report_train_step(ParamVersion{3});
  EXPECT_THROW(c.report_train_step(ParamVersion{2}), ConflictError);
  EXPECT_NO_THROW(c.report_train_step(ParamVersion{3}));
}

TEST(Coordinator, SilentWorkerDegradesAndRoundCompletes) {
  FakeClock clock;
  Coordinator c(1, 500, clock.fn());
  c.register_worker("live");
  c.register_worker("dead");
  c.report_worker_version("live", ParamVersion{0});
  c.report_worker_version("dead", ParamVersion{0});
  ASSERT_TRUE(c.report_train_step(ParamVersion{2}));
  clock.now += 400;
  c.poll("live");
  c.report_worker_version("live", ParamVersion{2});
  EXPECT_TRUE(c.skew().in_flight);  // "dead" still counts
  clock.now += 200;
  const auto s = c.skew();
  EXPECT_TRUE(s.workers.at("dead").degraded);
  EXPECT_FALSE(s.workers.at("live").degraded);
  EXPECT_FALSE(s.in_flight);
  EXPECT_EQ(s.rounds_completed, 1u);
  EXPECT_EQ(s.t_infer, ParamVersion{2});
  EXPECT_THROW(c.poll("dead"), ConflictError);

  const auto again = c.register_worker("dead");
  EXPECT_EQ(again.t_train, ParamVersion{2});
  EXPECT_EQ(again.incarnation, 3u);
  EXPECT_FALSE(c.skew().workers.at("dead").degraded);
}

TEST(Coordinator, NewRoundWhenTrainerOutranDuringSync) {
  FakeClock clock;
  Coordinator c(1, 10'000, clock.fn());
  c.register_worker("w");
  c.report_worker_version("w", ParamVersion{0});
  c.report_train_step(ParamVersion{2});
  c.report_train_step(ParamVersion{5});
  c.report_worker_version("w", ParamVersion{2});
  const auto s = c.skew();
  EXPECT_EQ(s.rounds_completed, 1u);
  ASSERT_TRUE(s.in_flight);
  EXPECT_EQ(s.in_flight->target_version, ParamVersion{5});
}

TEST(Coordinator, LongPollWakesOnCommand) {
  Coordinator c(0, 10'000);
  c.register_worker("w");
  c.report_worker_version("w", ParamVersion{0});
  std::thread trainer([&] {
    std::this_thread::sleep_for(20ms);
    c.report_train_step(ParamVersion{1});
  });
  const auto reply = c.poll("w", 5000ms);
  trainer.join();
  ASSERT_TRUE(reply.command);
  EXPECT_EQ(reply.command->target_version, ParamVersion{1});
}

TEST(Coordinator, SkewJsonShape) {
  Coordinator c(1, 10'000);
  c.register_worker("w");
  const auto j = to_json(c.skew());
  for (const char* k : {"t_train", "t_infer", "delta_max", "last_sync_at", "in_flight", "workers"}) {
    EXPECT_TRUE(j.contains(k)) << k;
  }
  EXPECT_TRUE(j["workers"]["w"]["version"].is_null());
}

}  // namespace
}  // namespace echo::coordinator
