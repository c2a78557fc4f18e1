// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <variant>

#include "echo/core/run_config.hpp"
#include "echo/env/bandit.hpp"
#include "echo/env/level_gen.hpp"
#include "echo/env/sokoban.hpp"

namespace echo::env {

/// Runtime-selected environment used by rollouts. Prompt identifiers are
/// environment seeds.
class Environment {
 public:
  using State = std::variant<SokobanState, BanditState>;

  struct Step {
    double reward = 0.0;
    bool terminal = false;   // the episode is over
    bool truncated = false;  // over because the step limit ran out
  };

  static Environment from_config(const EnvConfig& cfg) {
    Environment e;
    if (cfg.kind == "bandit") {
      e.kind_ = Bandit(cfg.bandit_arms);
    } else {
      LevelGenOptions opt;
      opt.step_limit = cfg.step_limit;
      opt.min_reverse_moves = cfg.min_reverse_moves;
      opt.max_reverse_moves = cfg.max_reverse_moves;
      e.kind_ = opt;
    }
    return e;
  }

  FeatureSpec feature_spec() const {
    return std::holds_alternative<Bandit>(kind_) ? Bandit::feature_spec()
                                                 : sokoban_feature_spec();
  }

  std::uint32_t action_count() const {
    if (const auto* b = std::get_if<Bandit>(&kind_)) return b->arms();
    return kActionCount;
  }

  State reset(std::uint64_t prompt_id) const {
    if (const auto* b = std::get_if<Bandit>(&kind_)) return b->reset(prompt_id);
    return env::reset(prompt_id, std::get<LevelGenOptions>(kind_));
  }

  StateEncoding encode(const State& s) const {
    if (const auto* b = std::get_if<BanditState>(&s)) return Bandit::encode(*b);
    return encode_state(std::get<SokobanState>(s));
  }

  Step step(State& s, std::int32_t action) const {
    if (auto* bs = std::get_if<BanditState>(&s)) {
      const double r = std::get<Bandit>(kind_).step(*bs, action);
      return {r, true, false};
    }
    if (action < 0 || action >= kActionCount) throw ContractViolation("sokoban action out of range");
    auto& ss = std::get<SokobanState>(s);
    auto out = env::step(ss, static_cast<Action>(action));
    ss = out.next_state;
    return {out.reward, out.terminal, out.terminal && !ss.solved()};
  }

 private:
  std::variant<LevelGenOptions, Bandit> kind_;
};

}  // namespace echo::env
