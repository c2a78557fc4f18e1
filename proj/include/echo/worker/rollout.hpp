// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "echo/core/rng.hpp"
#include "echo/core/trajectory.hpp"
#include "echo/env/environment.hpp"
#include "echo/env/features.hpp"
#include "echo/policy/grpo.hpp"
#include "echo/policy/policy.hpp"

// Sampling shared by the inference worker and the in-process oracle. Both
// derive every random draw from the same labelled streams, so a remote
// worker and the oracle produce identical trajectories for the same inputs.
namespace echo::worker {

inline constexpr std::uint64_t kPromptIdLimit = std::uint64_t{1} << 53;

/// Plays one episode of `prompt_id` with the given effective weights.
/// values are all zero: GRPO uses no critic.
inline Trajectory rollout_episode(const env::Environment& env, const policy::Matrix& effective,
                                  std::uint64_t prompt_id, RngStream& rng) {
  const auto spec = env.feature_spec();
  auto state = env.reset(prompt_id);
  Trajectory t;
  for (;;) {
    auto token = env.encode(state);
    const auto features = env::one_hot_features(token, spec);
    const auto sample = policy::act(effective, features, rng);
    const auto step = env.step(state, sample.action);
    t.tokens.push_back(std::move(token));
    t.actions.push_back(sample.action);
    t.logprobs.push_back(sample.logprob);
    t.values.push_back(0.0);
    t.rewards.push_back(step.reward);
    if (step.terminal) {
      t.terminal = !step.truncated;
      return t;
    }
  }
}

inline std::string sequential_label(ParamVersion v, std::uint64_t prompt_id, std::uint32_t member) {
  return "seq/v" + v.str() + "/p" + std::to_string(prompt_id) + "/n" + std::to_string(member);
}

inline std::string async_label(const std::string& worker_id, std::uint64_t incarnation, std::uint64_t batch,
                               std::uint64_t prompt_id, std::uint32_t member) {
  return "async/" + worker_id + "/" + std::to_string(incarnation) + "/b" + std::to_string(batch) + "/p" +
         std::to_string(prompt_id) + "/n" + std::to_string(member);
}

/// Prompts the trainer requests at optimisation step `step`.
inline std::vector<std::uint64_t> step_prompts(std::int64_t seed, std::uint64_t step, std::uint32_t count) {
  auto rng = seeded_rng(seed, "prompts/step" + std::to_string(step));
  std::vector<std::uint64_t> out(count);
  for (auto& p : out) p = rng.next_u64() >> 11;
  return out;
}

/// Sequential-mode sampling: rollout_n episodes per prompt, prompt-major.
inline std::vector<Trajectory> sample_sequential(const env::Environment& env, const policy::Matrix& effective,
                                                 ParamVersion version, std::int64_t seed,
                                                 const std::vector<std::uint64_t>& prompts, std::uint32_t rollout_n) {
  std::vector<Trajectory> out;
  out.reserve(prompts.size() * rollout_n);
  for (const auto p : prompts) {
    for (std::uint32_t j = 0; j < rollout_n; ++j) {
      auto rng = seeded_rng(seed, sequential_label(version, p, j));
      out.push_back(rollout_episode(env, effective, p, rng));
    }
  }
  return out;
}

/// Splits a prompt-major trajectory list into GRPO groups.
inline std::vector<policy::GrpoGroup> group_by_prompt(const std::vector<std::uint64_t>& prompts,
                                                     std::vector<Trajectory> trajectories, std::uint32_t rollout_n) {
  if (trajectories.size() != prompts.size() * rollout_n) {
    throw ContractViolation("expected " + std::to_string(prompts.size() * rollout_n) + " trajectories, got " +
                            std::to_string(trajectories.size()));
  }
  std::vector<policy::GrpoGroup> groups;
  groups.reserve(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    std::vector<Trajectory> members(std::make_move_iterator(trajectories.begin() + i * rollout_n),
                                    std::make_move_iterator(trajectories.begin() + (i + 1) * rollout_n));
    groups.push_back(policy::make_group(prompts[i], std::move(members)));
  }
  return groups;
}

/// Mean total reward over a set of trajectories.
inline double mean_return(const std::vector<Trajectory>& ts) {
  if (ts.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& t : ts) sum += t.total_reward();
  return sum / static_cast<double>(ts.size());
}

}  // namespace echo::worker
