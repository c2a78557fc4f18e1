// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "echo/core/clock.hpp"
#include "echo/core/run_config.hpp"
#include "echo/env/environment.hpp"
#include "echo/policy/grpo.hpp"
#include "echo/trainer/training_log.hpp"
#include "echo/worker/rollout.hpp"

namespace echo::harness {

/// Single-process reference run: the same sampling streams and update rule
/// as the networked sequential mode, with no services in between.
inline trainer::TrainingLog run_monolithic_oracle(const RunConfig& cfg, std::uint64_t steps) {
  validate(cfg);
  const auto env = env::Environment::from_config(cfg.env);
  const auto spec = env.feature_spec();
  auto p = policy::initial_policy(env.action_count(), spec.dim(), cfg);
  trainer::TrainingLog log;
  log.trail.push_back(p);
  for (std::uint64_t s = 0; s < steps; ++s) {
    const auto started = steady_ms();
    const auto prompts = worker::step_prompts(cfg.seed, s, cfg.prompts_per_step());
    auto trajectories =
        worker::sample_sequential(env, policy::effective_weights(p), p.version, cfg.seed, prompts, cfg.rollout_n);
    trainer::StepRecord rec;
    rec.step = s;
    rec.mean_return = worker::mean_return(trajectories);
    rec.staleness_histogram[0] = trajectories.size();
    const auto groups = worker::group_by_prompt(prompts, std::move(trajectories), cfg.rollout_n);
    try {
      p = policy::grpo_update(p, groups, cfg, spec);
    } catch (const DivergenceError& e) {
      throw DivergenceError("oracle diverged at step " + std::to_string(s) + ": " + e.what());
    }
    rec.version = p.version;
    rec.wall_ms = steady_ms() - started;
    log.steps.push_back(std::move(rec));
    log.trail.push_back(p);
  }
  return log;
}

}  // namespace echo::harness
