// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <set>
#include <thread>
#include <vector>

#include <gtest/gtest.h>

#include "echo/buffer/replay_buffer.hpp"
#include "echo/core/rng.hpp"
#include "support/batches.hpp"

namespace echo::buffer {
namespace {

using echo::testing::make_batch;
using namespace std::chrono_literals;

TEST(ReplayBuffer, RejectsMisalignedPush) {
  ReplayBuffer buf(4, 64);
  EXPECT_THROW(buf.push(make_batch(ParamVersion{0}, 0, 3, 2)), AlignmentError);
  EXPECT_EQ(buf.stats().pushed_total, 0u);
  EXPECT_TRUE(buf.push(make_batch(ParamVersion{0}, 0, 4, 2)).accepted);
}

TEST(ReplayBuffer, PullSizeMustMatchMinibatch) {
  ReplayBuffer buf(4, 64);
  EXPECT_THROW(buf.pull(8, ParamVersion{0}), ContractViolation);
}

TEST(ReplayBuffer, PullsOldestEligibleWholeMinibatches) {
  ReplayBuffer buf(4, 64);
  buf.push(make_batch(ParamVersion{0}, 0, 4, 2, "a"));   // 8 trajectories
  buf.push(make_batch(ParamVersion{1}, 10, 2, 2, "b"));  // 4 trajectories
  auto first = buf.pull(4, ParamVersion{0});
  ASSERT_EQ(first.trajectories.size(), 4u);
  for (std::uint32_t k = 0; k < 4; ++k) {
    EXPECT_EQ(first.trajectories[k].sequence_no, 0u);
    EXPECT_EQ(first.trajectories[k].offset, k);
    EXPECT_EQ(first.trajectories[k].param_version, ParamVersion{0});
    EXPECT_EQ(first.trajectories[k].worker_id, "a");
  }
  EXPECT_EQ(first.trajectories[2].prompt_id, 1u);
  auto skip = buf.pull(4, ParamVersion{1});
  ASSERT_EQ(skip.trajectories.size(), 4u);
  EXPECT_EQ(skip.trajectories[0].sequence_no, 1u);
  EXPECT_EQ(skip.trajectories[0].prompt_id, 10u);
  auto rest = buf.pull(4, ParamVersion{0});
  EXPECT_EQ(rest.trajectories[0].offset, 4u);
  EXPECT_TRUE(buf.pull(4, ParamVersion{0}).empty());
}

TEST(ReplayBuffer, EmptyPullCarriesWaitHint) {
  ReplayBuffer buf(2, 8);
  const auto out = buf.pull(2, ParamVersion{0}, 10ms);
  EXPECT_TRUE(out.empty());
  EXPECT_GT(out.wait_hint_ms, 0u);
}

TEST(ReplayBuffer, BackPressureAtCapacity) {
  ReplayBuffer buf(2, 4);
  EXPECT_TRUE(buf.push(make_batch(ParamVersion{0}, 0, 2, 2)).accepted);
  const auto full = buf.push(make_batch(ParamVersion{0}, 2, 1, 2));
  EXPECT_FALSE(full.accepted);
  EXPECT_GT(full.retry_after_ms, 0u);
  EXPECT_EQ(buf.stats().pushed_total, 4u);
  EXPECT_THROW(buf.push(make_batch(ParamVersion{0}, 0, 3, 2)), ContractViolation);

  std::thread consumer([&] {
    std::this_thread::sleep_for(20ms);
    buf.pull(2, ParamVersion{0});
  });
  EXPECT_TRUE(buf.push(make_batch(ParamVersion{0}, 2, 1, 2), 2000ms).accepted);
  consumer.join();
}

TEST(ReplayBuffer, BlockedPullWakesOnPush) {
  ReplayBuffer buf(2, 8);
  std::thread producer([&] {
    std::this_thread::sleep_for(20ms);
    buf.push(make_batch(ParamVersion{3}, 0, 1, 2));
  });
  const auto out = buf.pull(2, ParamVersion{2}, 2000ms);
  producer.join();
  ASSERT_EQ(out.trajectories.size(), 2u);
  EXPECT_EQ(out.trajectories[0].param_version, ParamVersion{3});
}

TEST(ReplayBuffer, EvictStaleCountsTrajectories) {
  ReplayBuffer buf(2, 64);
  buf.push(make_batch(ParamVersion{0}, 0, 2, 2));
  buf.push(make_batch(ParamVersion{1}, 2, 2, 2));
  buf.push(make_batch(ParamVersion{2}, 4, 1, 2));
  buf.pull(2, ParamVersion{0});
  EXPECT_EQ(buf.evict_stale(ParamVersion{2}), 6u);
  const auto s = buf.stats();
  EXPECT_EQ(s.resident, 2u);
  EXPECT_EQ(s.evicted_total, 6u);
  EXPECT_EQ(s.version_histogram, (std::map<std::uint64_t, std::uint64_t>{{2, 2}}));
}

// Random interleavings of push/pull/evict conserve trajectories, hand each
// out at most once, keep minibatches version-pure and keep FIFO order for a
// non-decreasing pull floor.
TEST(ReplayBuffer, RandomScheduleInvariants) {
  for (std::int64_t seed = 0; seed < 30; ++seed) {
    auto rng = seeded_rng(seed, "test/buffer/schedule");
    const std::uint32_t mb = 2 * (1 + static_cast<std::uint32_t>(rng.below(3)));
    ReplayBuffer buf(mb, mb * 6);
    std::set<std::pair<std::uint64_t, std::uint32_t>> seen;
    std::uint64_t version = 0, floor = 0, prompt = 0, last_seq = 0;
    bool any = false;
    for (int op = 0; op < 200; ++op) {
      const auto pick = rng.below(10);
      if (pick < 4) {
        if (rng.below(3) == 0) ++version;
        const auto chunks = 1 + static_cast<std::uint32_t>(rng.below(2));
        const auto r = buf.push(make_batch(ParamVersion{version}, prompt, chunks * mb / 2, 2));
        prompt += chunks * mb / 2;
        if (!r.accepted) {
          EXPECT_GT(r.retry_after_ms, 0u);
        }
      } else if (pick < 8) {
        const auto out = buf.pull(mb, ParamVersion{floor});
        if (out.empty()) continue;
        ASSERT_EQ(out.trajectories.size(), mb);
        for (const auto& c : out.trajectories) {
          EXPECT_EQ(c.param_version, out.trajectories[0].param_version);
          EXPECT_EQ(c.sequence_no, out.trajectories[0].sequence_no);
          EXPECT_GE(c.param_version.value, floor);
          EXPECT_TRUE(seen.insert({c.sequence_no, c.offset}).second);
        }
        if (any) {
          EXPECT_GE(out.trajectories[0].sequence_no, last_seq);
        }
        last_seq = out.trajectories[0].sequence_no;
        any = true;
      } else {
        if (rng.below(2) == 0 && floor < version) ++floor;
        buf.evict_stale(ParamVersion{floor});
      }
      const auto s = buf.stats();
      EXPECT_EQ(s.pushed_total, s.pulled_total + s.evicted_total + s.resident);
      EXPECT_LE(s.resident, buf.capacity());
      std::uint64_t hist = 0;
      for (const auto& [_, n] : s.version_histogram) hist += n;
      EXPECT_EQ(hist, s.resident);
    }
    EXPECT_EQ(seen.size(), buf.stats().pulled_total);
  }
}

TEST(ReplayBuffer, ConcurrentProducersAndConsumerConserve) {
  ReplayBuffer buf(4, 32);
  std::atomic<bool> done{false};
  std::atomic<std::uint64_t> pulled{0};
  std::vector<std::thread> producers;
  for (int w = 0; w < 3; ++w) {
    producers.emplace_back([&, w] {
      for (std::uint64_t i = 0; i < 20; ++i) {
        auto b = make_batch(ParamVersion{i}, w * 1000 + i * 4, 4, 2, "w" + std::to_string(w));
        while (!buf.push(b, 50ms).accepted) {
        }
      }
    });
  }
  std::thread consumer([&] {
    while (!done || buf.stats().resident > 0) {
      const auto out = buf.pull(4, ParamVersion{0}, 20ms);
      pulled += out.trajectories.size();
    }
  });
  for (auto& p : producers) p.join();
  done = true;
  consumer.join();
  const auto s = buf.stats();
  EXPECT_EQ(s.pushed_total, 3u * 20u * 8u);
  EXPECT_EQ(pulled.load(), s.pushed_total);
  EXPECT_EQ(s.resident, 0u);
}

TEST(ReplayBuffer, StatsJsonRoundTrip) {
  ReplayBuffer buf(2, 16);
  buf.push(make_batch(ParamVersion{4}, 0, 2, 2));
  const auto s = buf.stats();
  const auto back = buffer_stats_from_json(to_json(s));
  EXPECT_EQ(back.resident, s.resident);
  EXPECT_EQ(back.version_histogram, s.version_histogram);
}

}  // namespace
}  // namespace echo::buffer
