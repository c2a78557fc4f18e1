// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <filesystem>
#include <thread>
#include <vector>

#include <gtest/gtest.h>

#include "echo/core/rng.hpp"
#include "echo/policy/policy.hpp"
#include "echo/policy/snapshot_codec.hpp"
#include "echo/store/snapshot_store.hpp"

namespace echo::store {
namespace {

PolicySnapshot full(std::uint64_t v) {
  return make_snapshot(ParamVersion{v}, SnapshotKind::kFull, "payload-" + std::to_string(v));
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("echo_store_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  return dir;
}

TEST(SnapshotStore, PublishesGaplesslyFromZero) {
  SnapshotStore s;
  EXPECT_FALSE(s.latest());
  EXPECT_THROW(s.publish(full(1)), ConflictError);
  s.publish(full(0));
  s.publish(full(1));
  EXPECT_THROW(s.publish(full(1)), ConflictError);
  EXPECT_THROW(s.publish(full(3)), ConflictError);
  EXPECT_EQ(s.latest(), ParamVersion{1});
  EXPECT_EQ(s.fetch(ParamVersion{0}).payload, "payload-0");
  EXPECT_EQ(s.fetch_latest().version, ParamVersion{1});
}

TEST(SnapshotStore, FetchReturnsPublishedBytes) {
  SnapshotStore s;
  auto snap = make_snapshot(ParamVersion{0}, SnapshotKind::kFull, std::string("\0\x01\xff bin", 7));
  s.publish(snap);
  const auto got = s.fetch(ParamVersion{0});
  EXPECT_EQ(got.payload, snap.payload);
  EXPECT_EQ(got.checksum, snap.checksum);
  EXPECT_TRUE(got.verifies());
}

TEST(SnapshotStore, MissingVersionIsNotFound) {
  SnapshotStore s;
  EXPECT_THROW(s.fetch(ParamVersion{0}), NotFoundError);
  EXPECT_THROW(s.fetch_latest(), NotFoundError);
  s.publish(full(0));
  EXPECT_THROW(s.fetch(ParamVersion{5}), NotFoundError);
}

TEST(SnapshotStore, RejectsChecksumMismatch) {
  SnapshotStore s;
  auto snap = full(0);
  snap.payload += "x";
  EXPECT_THROW(s.publish(snap), ChecksumError);
  EXPECT_FALSE(s.latest());
}

TEST(SnapshotStore, ConcurrentDuplicatePublishHasOneWinner) {
  for (int trial = 0; trial < 20; ++trial) {
    SnapshotStore s;
    s.publish(full(0));
    std::atomic<int> ok{0}, conflict{0};
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) {
      threads.emplace_back([&, i] {
        try {
          s.publish(make_snapshot(ParamVersion{1}, SnapshotKind::kFull, "racer-" + std::to_string(i)));
          ++ok;
        } catch (const ConflictError&) {
          ++conflict;
        }
      });
    }
    for (auto& t : threads) t.join();
    EXPECT_EQ(ok.load(), 1);
    EXPECT_EQ(conflict.load(), 7);
    EXPECT_TRUE(s.fetch(ParamVersion{1}).verifies());
  }
}

TEST(SnapshotStore, GcKeepsNewestVersions) {
  SnapshotStore s;
  for (std::uint64_t v = 0; v < 10; ++v) s.publish(full(v));
  EXPECT_EQ(s.gc(3), 7u);
  EXPECT_EQ(s.versions(), (std::vector<ParamVersion>{ParamVersion{7}, ParamVersion{8}, ParamVersion{9}}));
  EXPECT_THROW(s.gc(0), ContractViolation);
}

TEST(SnapshotStore, GcRetainsDeltaBase) {
  RunConfig cfg;
  cfg.lora = LoraConfig{2, 4.0, 0.01};
  auto p = policy::initial_policy(4, 6, cfg);
  SnapshotStore s;
  s.publish(make_snapshot(ParamVersion{0}, SnapshotKind::kFull, policy::encode_full(p)));
  for (std::uint64_t v = 1; v < 6; ++v) {
    p.version = ParamVersion{v};
    s.publish(make_snapshot(p.version, SnapshotKind::kLoraDelta, policy::encode_lora_delta(p, ParamVersion{0}),
                            ParamVersion{0}));
  }
  s.gc(2);
  EXPECT_EQ(s.versions(), (std::vector<ParamVersion>{ParamVersion{0}, ParamVersion{4}, ParamVersion{5}}));
  const auto base = policy::decode_full(s.fetch(ParamVersion{0}).payload);
  const auto rebuilt = policy::apply_delta(base, policy::decode_lora_delta(s.fetch(ParamVersion{5}).payload));
  EXPECT_EQ(rebuilt.version, ParamVersion{5});
}

TEST(SnapshotStore, DeltaRequiresStoredFullBase) {
  SnapshotStore s;
  s.publish(full(0));
  auto d = make_snapshot(ParamVersion{1}, SnapshotKind::kLoraDelta, "d", ParamVersion{7});
  EXPECT_THROW(s.publish(d), NotFoundError);
  d.base_version.reset();
  EXPECT_THROW(s.publish(d), SchemaError);
}

TEST(SnapshotStore, LogReplaysAfterRestart) {
  const auto dir = scratch_dir("replay");
  {
    SnapshotStore s(dir);
    for (std::uint64_t v = 0; v < 5; ++v) s.publish(full(v));
    s.gc(2);
  }
  SnapshotStore again(dir);
  EXPECT_EQ(again.latest(), ParamVersion{4});
  EXPECT_EQ(again.versions(), (std::vector<ParamVersion>{ParamVersion{3}, ParamVersion{4}}));
  EXPECT_EQ(again.fetch(ParamVersion{4}).payload, "payload-4");
  EXPECT_THROW(again.publish(full(4)), ConflictError);
  again.publish(full(5));
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace echo::store
