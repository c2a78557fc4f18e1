// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "echo/core/trajectory.hpp"

namespace echo::testing {

// A one-step trajectory whose reward encodes (prompt, member) so tests can
// trace where a consumed trajectory came from.
inline Trajectory tagged_trajectory(std::uint64_t prompt, std::uint32_t member) {
  Trajectory t;
  t.tokens = {{static_cast<std::int32_t>(prompt % 7)}};
  t.actions = {static_cast<std::int32_t>(member % 4)};
  t.logprobs = {-1.0};
  t.values = {0.0};
  t.rewards = {static_cast<double>(prompt * 1000 + member)};
  t.terminal = true;
  return t;
}

inline RolloutBatch make_batch(ParamVersion v, std::uint64_t first_prompt, std::uint32_t prompts,
                               std::uint32_t group, const std::string& worker = "w0") {
  RolloutBatch b;
  b.param_version = v;
  b.group_size = group;
  b.worker_id = worker;
  for (std::uint32_t p = 0; p < prompts; ++p) {
    b.prompt_ids.push_back(first_prompt + p);
    for (std::uint32_t j = 0; j < group; ++j) b.trajectories.push_back(tagged_trajectory(first_prompt + p, j));
  }
  return b;
}

}  // namespace echo::testing
