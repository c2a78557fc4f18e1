// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "echo/core/error.hpp"

namespace echo {

enum class SyncMode { kSequential, kAsync };

inline std::string to_string(SyncMode m) {
  return m == SyncMode::kSequential ? "sequential" : "async";
}

inline SyncMode sync_mode_from_string(const std::string& s) {
  if (s == "sequential") return SyncMode::kSequential;
  if (s == "async") return SyncMode::kAsync;
  throw SchemaError("mode must be 'sequential' or 'async', got '" + s + "'");
}

struct LoraConfig {
  std::uint32_t rank = 4;
  double alpha = 8.0;
  double init_scale = 0.01;  // stddev of the random B factor
};

struct EnvConfig {
  std::string kind = "sokoban";  // or "bandit"
  std::uint32_t step_limit = 60;
  std::uint32_t bandit_arms = 4;
  // Level difficulty: number of reverse-play moves used to scramble a level.
  std::uint32_t min_reverse_moves = 1;
  std::uint32_t max_reverse_moves = 4;
};

/// Every knob a run needs. Trainer, workers and the oracle read the same
/// file so they agree on seeds, batch shapes and hyperparameters.
struct RunConfig {
  SyncMode mode = SyncMode::kSequential;
  std::uint64_t delta_max = 1;
  std::uint64_t version_gap_threshold = 0;
  // Trajectories per optimisation step; a whole number of GRPO groups.
  std::uint32_t trainer_minibatch = 96;
  // Trajectories per async push.
  std::uint32_t inference_batch = 96;
  std::uint32_t rollout_n = 8;
  double learning_rate = 0.1;
  double kl_coef = 0.001;
  double clip_eps = 0.2;
  std::optional<LoraConfig> lora;
  std::int64_t seed = 0;
  EnvConfig env;
  // 0 means 8 x inference_batch.
  std::uint32_t buffer_capacity = 0;
  std::uint32_t pull_timeout_ms = 30000;
  std::uint32_t liveness_timeout_ms = 10000;

  std::uint32_t prompts_per_step() const { return trainer_minibatch / rollout_n; }

  std::uint32_t effective_buffer_capacity() const {
    return buffer_capacity != 0 ? buffer_capacity : 8 * inference_batch;
  }
};

/// Throws SchemaError for values a run cannot start with. Batch alignment
/// for async mode is checked by the coordinator, not here.
inline void validate(const RunConfig& c) {
  if (c.delta_max == 0) throw SchemaError("delta_max must be positive");
  if (c.trainer_minibatch == 0 || c.inference_batch == 0 || c.rollout_n == 0) {
    throw SchemaError("batch sizes and rollout_n must be positive");
  }
  if (c.rollout_n < 2) throw SchemaError("GRPO needs rollout_n >= 2");
  if (c.trainer_minibatch % c.rollout_n != 0) {
    throw SchemaError("trainer_minibatch must hold whole groups of rollout_n");
  }
  if (c.inference_batch % c.rollout_n != 0) {
    throw SchemaError("inference_batch must hold whole groups of rollout_n");
  }
  if (!(c.learning_rate >= 0.0)) throw SchemaError("learning_rate must be >= 0");
  if (!(c.kl_coef >= 0.0)) throw SchemaError("kl_coef must be >= 0");
  if (!(c.clip_eps > 0.0)) throw SchemaError("clip_eps must be positive");
  if (c.lora && (c.lora->rank == 0 || !(c.lora->alpha > 0.0))) {
    throw SchemaError("lora rank and alpha must be positive");
  }
  if (c.env.kind != "sokoban" && c.env.kind != "bandit") {
    throw SchemaError("env.kind must be 'sokoban' or 'bandit'");
  }
  if (c.env.step_limit == 0) throw SchemaError("env.step_limit must be positive");
  if (c.env.min_reverse_moves == 0 || c.env.min_reverse_moves > c.env.max_reverse_moves) {
    throw SchemaError("env reverse-move range must satisfy 0 < min <= max");
  }
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j{{"mode", to_string(c.mode)},
                   {"delta_max", c.delta_max},
                   {"version_gap_threshold", c.version_gap_threshold},
                   {"trainer_minibatch", c.trainer_minibatch},
                   {"inference_batch", c.inference_batch},
                   {"rollout_n", c.rollout_n},
                   {"learning_rate", c.learning_rate},
                   {"kl_coef", c.kl_coef},
                   {"clip_eps", c.clip_eps},
                   {"seed", c.seed},
                   {"env",
                    {{"kind", c.env.kind},
                     {"step_limit", c.env.step_limit},
                     {"bandit_arms", c.env.bandit_arms},
                     {"min_reverse_moves", c.env.min_reverse_moves},
                     {"max_reverse_moves", c.env.max_reverse_moves}}},
                   {"buffer_capacity", c.buffer_capacity},
                   {"pull_timeout_ms", c.pull_timeout_ms},
                   {"liveness_timeout_ms", c.liveness_timeout_ms}};
  if (c.lora) {
    j["lora"] = {{"rank", c.lora->rank},
                 {"alpha", c.lora->alpha},
                 {"init_scale", c.lora->init_scale}};
  } else {
    j["lora"] = nullptr;
  }
  return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    if (j.contains("mode")) c.mode = sync_mode_from_string(j["mode"].get<std::string>());
    c.delta_max = j.value("delta_max", c.delta_max);
    c.version_gap_threshold = j.value("version_gap_threshold", c.version_gap_threshold);
    c.trainer_minibatch = j.value("trainer_minibatch", c.trainer_minibatch);
    c.inference_batch = j.value("inference_batch", c.inference_batch);
    c.rollout_n = j.value("rollout_n", c.rollout_n);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.kl_coef = j.value("kl_coef", c.kl_coef);
    c.clip_eps = j.value("clip_eps", c.clip_eps);
    c.seed = j.value("seed", c.seed);
    if (j.contains("env")) {
      const auto& e = j["env"];
      c.env.kind = e.value("kind", c.env.kind);
      c.env.step_limit = e.value("step_limit", c.env.step_limit);
      c.env.bandit_arms = e.value("bandit_arms", c.env.bandit_arms);
      c.env.min_reverse_moves = e.value("min_reverse_moves", c.env.min_reverse_moves);
      c.env.max_reverse_moves = e.value("max_reverse_moves", c.env.max_reverse_moves);
    }
    if (j.contains("lora") && !j["lora"].is_null()) {
      LoraConfig l;
      l.rank = j["lora"].value("rank", l.rank);
      l.alpha = j["lora"].value("alpha", l.alpha);
      l.init_scale = j["lora"].value("init_scale", l.init_scale);
      c.lora = l;
    }
    c.buffer_capacity = j.value("buffer_capacity", c.buffer_capacity);
    c.pull_timeout_ms = j.value("pull_timeout_ms", c.pull_timeout_ms);
    c.liveness_timeout_ms = j.value("liveness_timeout_ms", c.liveness_timeout_ms);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad run config: ") + e.what());
  }
  validate(c);
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("config " + path.string() + " is not JSON: " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace echo
