// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <set>

#include <gtest/gtest.h>
#include <json.hpp>

#include "echo/core/byte_codec.hpp"
#include "echo/core/checksum.hpp"
#include "echo/core/param_version.hpp"
#include "echo/core/rng.hpp"
#include "echo/core/run_config.hpp"
#include "echo/core/trajectory.hpp"

namespace echo {
namespace {

Trajectory random_trajectory(RngStream& rng, std::size_t steps) {
  Trajectory t;
  for (std::size_t i = 0; i < steps; ++i) {
    StateEncoding tok(36);
    for (auto& c : tok) c = static_cast<std::int32_t>(rng.below(7));
    t.tokens.push_back(std::move(tok));
    t.actions.push_back(static_cast<std::int32_t>(rng.below(4)));
    // Spread across magnitudes, including subnormal-ish and exact zero.
    const double lp = rng.below(10) == 0 ? 0.0 : -std::exp(40.0 * (rng.uniform() - 0.9));
    t.logprobs.push_back(lp);
    t.values.push_back(0.0);
    t.rewards.push_back(std::ldexp(rng.normal(), static_cast<int>(rng.below(40)) - 20));
  }
  t.terminal = rng.below(2) == 1;
  return t;
}

TEST(Trajectory, SingleStepRoundTrip) {
  Trajectory t;
  t.tokens = {{0}};
  t.actions = {1};
  t.logprobs = {-0.6931471805599453};
  t.values = {0.0};
  t.rewards = {-0.1};
  t.terminal = false;
  const auto bytes = encode_trajectory(t);
  EXPECT_EQ(decode_trajectory(bytes), t);
  EXPECT_EQ(encode_trajectory(decode_trajectory(bytes)), bytes);
}

TEST(Trajectory, EmptyRejectedBeforeEncoding) {
  Trajectory t;
  EXPECT_THROW(encode_trajectory(t), ContractViolation);
}

TEST(Trajectory, PositiveLogprobRejected) {
  Trajectory t{{{0}}, {0}, {0.5}, {0.0}, {0.0}, true};
  EXPECT_THROW(validate(t), ContractViolation);
  t.logprobs = {std::nan("")};
  EXPECT_THROW(validate(t), ContractViolation);
}

TEST(Trajectory, LengthMismatchRejected) {
  Trajectory t{{{0}, {0}}, {0}, {-1.0}, {0.0}, {0.0}, true};
  EXPECT_THROW(validate(t), ContractViolation);
}

TEST(Trajectory, WireFieldNames) {
  Trajectory t{{{3}}, {2}, {-1.0}, {0.0}, {1.0}, true};
  const auto j = to_json(t);
  std::set<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.insert(k);
  EXPECT_EQ(keys, (std::set<std::string>{"tokens", "actions", "logprobs", "values", "rewards",
                                         "terminal"}));
}

// Property: decode(encode(t)) == t and encoding is canonical for random
// valid 50-step trajectories.
TEST(Trajectory, RandomRoundTripProperty) {
  auto rng = seeded_rng(7, "test/trajectory-roundtrip");
  for (int trial = 0; trial < 200; ++trial) {
    const auto t = random_trajectory(rng, 50);
    const auto bytes = encode_trajectory(t);
    const auto back = decode_trajectory(bytes);
    ASSERT_EQ(back, t) << "trial " << trial;
    ASSERT_EQ(encode_trajectory(back), bytes);
  }
}

// Byte equality <=> value equality: a one-ulp change flips the bytes.
TEST(Trajectory, CanonicalEncodingDistinguishesValues) {
  auto rng = seeded_rng(8, "test/trajectory-canonical");
  auto t = random_trajectory(rng, 5);
  auto u = t;
  u.rewards[2] = std::nextafter(u.rewards[2], 1e9);
  EXPECT_NE(t, u);
  EXPECT_NE(encode_trajectory(t), encode_trajectory(u));
  u = t;
  EXPECT_EQ(encode_trajectory(t), encode_trajectory(u));
}

TEST(Trajectory, MalformedJsonIsSchemaError) {
  EXPECT_THROW(decode_trajectory("{"), SchemaError);
  EXPECT_THROW(decode_trajectory(R"({"tokens":[[0]],"actions":[0]})"), SchemaError);
}

TEST(RolloutBatch, ShapeInvariant) {
  RolloutBatch b;
  b.group_size = 2;
  b.prompt_ids = {5, 6};
  Trajectory t{{{0}}, {0}, {-1.0}, {0.0}, {0.0}, true};
  b.trajectories.assign(3, t);
  EXPECT_THROW(validate(b), ContractViolation);
  b.trajectories.assign(4, t);
  EXPECT_NO_THROW(validate(b));
  EXPECT_EQ(b.prompt_of(3), 6u);
  const auto back = rollout_batch_from_json(to_json(b));
  EXPECT_EQ(back, b);
}

TEST(ParamVersion, WireFormAndOrdering) {
  EXPECT_EQ(version_to_wire(ParamVersion{5}), "5");
  EXPECT_EQ(version_from_wire("12"), ParamVersion{12});
  EXPECT_EQ(version_from_wire(12), ParamVersion{12});
  EXPECT_THROW(version_from_wire("theta_e"), SchemaError);
  EXPECT_THROW(version_from_wire(-1), SchemaError);
  EXPECT_LT(ParamVersion{3}, ParamVersion{3}.next());
  EXPECT_EQ(distance(ParamVersion{3}, ParamVersion{7}), 4u);
  EXPECT_EQ(distance(ParamVersion{7}, ParamVersion{3}), 4u);
}

TEST(Rng, SameSeedAndLabelIsDeterministic) {
  auto a = seeded_rng(42, "rollout/step0/prompt3");
  auto b = seeded_rng(42, "rollout/step0/prompt3");
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, DifferentLabelsDiffer) {
  auto a = seeded_rng(42, "a");
  auto b = seeded_rng(42, "b");
  int equal = 0;
  for (int i = 0; i < 100; ++i) equal += a.next_u64() == b.next_u64() ? 1 : 0;
  EXPECT_LT(equal, 100);
  EXPECT_EQ(equal, 0);
}

// Frozen draws: any host or build must reproduce these exactly.
TEST(Rng, MatchesCrossHostGoldenFile) {
  std::ifstream in(std::string(ECHO_FIXTURES) + "/rng_golden.json");
  ASSERT_TRUE(in) << "missing rng_golden.json";
  nlohmann::json golden;
  in >> golden;
  for (const auto& entry : golden["streams"]) {
    auto rng = seeded_rng(entry["seed"].get<std::int64_t>(), entry["label"].get<std::string>());
    for (const auto& expected : entry["u64"]) {
      ASSERT_EQ(rng.next_u64(), std::stoull(expected.get<std::string>()));
    }
    for (const auto& expected : entry["uniform"]) {
      ASSERT_EQ(rng.uniform(), expected.get<double>());
    }
    for (const auto& expected : entry["below10"]) {
      ASSERT_EQ(rng.below(10), expected.get<std::uint64_t>());
    }
  }
}

TEST(Rng, UniformAndBelowRanges) {
  auto rng = seeded_rng(1, "ranges");
  std::vector<int> hist(5, 0);
  for (int i = 0; i < 50000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ++hist[rng.below(5)];
  }
  for (int h : hist) EXPECT_NEAR(h, 10000, 500);
}

TEST(Checksum, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(ByteCodec, TruncatedInputThrows) {
  ByteWriter w;
  w.u64(7);
  w.f64(-0.0);
  const auto bytes = std::move(w).take();
  ByteReader r(bytes);
  EXPECT_EQ(r.u64(), 7u);
  EXPECT_TRUE(std::signbit(r.f64()));
  EXPECT_THROW(r.u8(), SchemaError);
}

TEST(RunConfig, JsonRoundTripAndValidation) {
  RunConfig c;
  c.mode = SyncMode::kAsync;
  c.lora = LoraConfig{2, 4.0, 0.05};
  c.seed = 17;
  const auto back = run_config_from_json(to_json(c));
  EXPECT_EQ(back.mode, SyncMode::kAsync);
  ASSERT_TRUE(back.lora);
  EXPECT_EQ(back.lora->rank, 2u);
  EXPECT_EQ(back.seed, 17);

  auto bad = to_json(c);
  bad["trainer_minibatch"] = 20;  // not a multiple of rollout_n = 16
  EXPECT_THROW(run_config_from_json(bad), SchemaError);
  bad = to_json(c);
  bad["mode"] = "bulk";
  EXPECT_THROW(run_config_from_json(bad), SchemaError);
}

}  // namespace
}  // namespace echo
