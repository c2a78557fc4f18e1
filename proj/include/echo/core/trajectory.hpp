// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "echo/core/error.hpp"
#include "echo/core/param_version.hpp"

namespace echo {

/// One observed state, as environment cell-category indices.
using StateEncoding = std::vector<std::int32_t>;

/// One episode. Sequence i holds the (s, a, log pi(a|s), v(s), r) record of
/// step i.
struct Trajectory {
  std::vector<StateEncoding> tokens;
  std::vector<std::int32_t> actions;
  std::vector<double> logprobs;
  std::vector<double> values;
  std::vector<double> rewards;
  bool terminal = false;

  std::size_t length() const { return actions.size(); }

  double total_reward() const {
    double sum = 0.0;
    for (double r : rewards) sum += r;
    return sum;
  }

  // Doubles compare by bit pattern so that value equality coincides with
  // byte equality of the canonical encoding.
  friend bool operator==(const Trajectory& a, const Trajectory& b) {
    auto same = [](const std::vector<double>& x, const std::vector<double>& y) {
      if (x.size() != y.size()) return false;
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (std::bit_cast<std::uint64_t>(x[i]) !=
            std::bit_cast<std::uint64_t>(y[i])) {
          return false;
        }
      }
      return true;
    };
    return a.tokens == b.tokens && a.actions == b.actions &&
           same(a.logprobs, b.logprobs) && same(a.values, b.values) &&
           same(a.rewards, b.rewards) && a.terminal == b.terminal;
  }
};

/// Throws ContractViolation if `t` breaks a Trajectory invariant.
inline void validate(const Trajectory& t) {
  const auto n = t.actions.size();
  if (n == 0) throw ContractViolation("trajectory has no steps");
  if (t.tokens.size() != n || t.logprobs.size() != n || t.values.size() != n ||
      t.rewards.size() != n) {
    throw ContractViolation("trajectory sequences differ in length");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(t.logprobs[i] <= 0.0)) {
      throw ContractViolation("logprob at step " + std::to_string(i) +
                              " is not a finite value <= 0");
    }
    if (!std::isfinite(t.logprobs[i]) || !std::isfinite(t.values[i]) ||
        !std::isfinite(t.rewards[i])) {
      throw ContractViolation("non-finite value at step " + std::to_string(i));
    }
    if (t.actions[i] < 0) throw ContractViolation("negative action index");
  }
}

inline nlohmann::json to_json(const Trajectory& t) {
  return nlohmann::json{{"tokens", t.tokens},     {"actions", t.actions},
                        {"logprobs", t.logprobs}, {"values", t.values},
                        {"rewards", t.rewards},   {"terminal", t.terminal}};
}

inline Trajectory trajectory_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("trajectory must be a JSON object");
  Trajectory t;
  try {
    j.at("tokens").get_to(t.tokens);
    j.at("actions").get_to(t.actions);
    j.at("logprobs").get_to(t.logprobs);
    j.at("values").get_to(t.values);
    j.at("rewards").get_to(t.rewards);
    t.terminal = j.at("terminal").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad trajectory: ") + e.what());
  }
  try {
    validate(t);
  } catch (const ContractViolation& e) {
    throw SchemaError(std::string("bad trajectory: ") + e.what());
  }
  return t;
}

/// Canonical encoding: compact JSON with sorted keys and shortest
/// round-trip doubles, so decode(encode(t)) == t bit for bit.
inline std::string encode_trajectory(const Trajectory& t) {
  validate(t);
  return to_json(t).dump();
}

inline Trajectory decode_trajectory(std::string_view bytes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("trajectory is not JSON: ") + e.what());
  }
  return trajectory_from_json(j);
}

/// A group of trajectories produced by one policy version. Trajectories are
/// stored prompt-major: the group_size samples of prompt_ids[0] come first.
struct RolloutBatch {
  ParamVersion param_version;
  std::vector<std::uint64_t> prompt_ids;
  std::vector<Trajectory> trajectories;
  std::int64_t produced_at = 0;  // ms since the Unix epoch
  std::uint32_t group_size = 1;
  std::string worker_id;

  std::uint64_t prompt_of(std::size_t trajectory_index) const {
    return prompt_ids.at(trajectory_index / group_size);
  }

  friend bool operator==(const RolloutBatch&, const RolloutBatch&) = default;
};

inline void validate(const RolloutBatch& b) {
  if (b.group_size == 0) throw ContractViolation("group_size must be positive");
  if (b.trajectories.size() != b.prompt_ids.size() * b.group_size) {
    throw ContractViolation(
        "rollout batch holds " + std::to_string(b.trajectories.size()) +
        " trajectories, expected prompts x group_size = " +
        std::to_string(b.prompt_ids.size() * b.group_size));
  }
  for (const auto& t : b.trajectories) validate(t);
}

inline nlohmann::json to_json(const RolloutBatch& b) {
  nlohmann::json trajs = nlohmann::json::array();
  for (const auto& t : b.trajectories) trajs.push_back(to_json(t));
  return nlohmann::json{{"param_version", version_to_wire(b.param_version)},
                        {"prompt_ids", b.prompt_ids},
                        {"trajectories", std::move(trajs)},
                        {"produced_at", b.produced_at},
                        {"group_size", b.group_size},
                        {"worker_id", b.worker_id}};
}

inline RolloutBatch rollout_batch_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("rollout batch must be a JSON object");
  RolloutBatch b;
  try {
    b.param_version = version_from_wire(j.at("param_version"));
    j.at("prompt_ids").get_to(b.prompt_ids);
    for (const auto& t : j.at("trajectories")) {
      b.trajectories.push_back(trajectory_from_json(t));
    }
    b.produced_at = j.value("produced_at", std::int64_t{0});
    b.group_size = j.at("group_size").get<std::uint32_t>();
    b.worker_id = j.value("worker_id", std::string{});
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad rollout batch: ") + e.what());
  }
  try {
    validate(b);
  } catch (const ContractViolation& e) {
    throw SchemaError(e.what());
  }
  return b;
}

}  // namespace echo
