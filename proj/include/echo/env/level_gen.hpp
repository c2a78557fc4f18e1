// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "echo/core/error.hpp"
#include "echo/core/rng.hpp"
#include "echo/env/sokoban.hpp"
#include "echo/env/solver.hpp"

namespace echo::env {

class GeneratorExhausted : public Error {
 public:
  using Error::Error;
};

struct LevelGenOptions {
  std::uint32_t step_limit = kDefaultStepLimit;
  std::uint32_t min_reverse_moves = 1;
  std::uint32_t max_reverse_moves = 4;
  double pull_probability = 0.8;
  double interior_wall_probability = 0.5;
  int max_attempts = 100;
};

inline Action opposite(Action a) {
  switch (a) {
    case Action::kUp: return Action::kDown;
    case Action::kDown: return Action::kUp;
    case Action::kLeft: return Action::kRight;
    case Action::kRight: return Action::kLeft;
  }
  return a;
}

namespace detail {

// Reverse-play level construction: boxes start on their targets and the
// player walks backwards, dragging boxes off. Anything produced this way is
// solvable by replaying the walk forwards.
inline std::optional<SokobanState> try_generate(RngStream& rng, const LevelGenOptions& opt) {
  SokobanState s;
  s.step_limit = opt.step_limit;
  std::vector<int> interior;
  for (int r = 0; r < kGridSide; ++r) {
    for (int c = 0; c < kGridSide; ++c) {
      const bool border = r == 0 || c == 0 || r == kGridSide - 1 || c == kGridSide - 1;
      s.grid[r * kGridSide + c] = border ? Cell::kWall : Cell::kFloor;
      if (!border) interior.push_back(r * kGridSide + c);
    }
  }
  rng.shuffle(interior.begin(), interior.end());
  std::size_t next = 0;
  if (rng.uniform() < opt.interior_wall_probability) s.grid[interior[next++]] = Cell::kWall;
  for (int b = 0; b < kBoxCount; ++b) s.grid[interior[next++]] = Cell::kBoxOnTarget;
  int player = interior[next++];
  s.grid[player] = Cell::kPlayer;

  const auto span = opt.max_reverse_moves - opt.min_reverse_moves + 1;
  const auto moves = opt.min_reverse_moves + static_cast<std::uint32_t>(rng.below(span));
  for (std::uint32_t m = 0; m < moves; ++m) {
    const auto a = static_cast<Action>(rng.below(kActionCount));
    const int dest = neighbour(player, a);
    if (dest < 0 || !is_free(s.grid[dest])) continue;
    const int behind = neighbour(player, opposite(a));
    const bool pull = behind >= 0 && has_box(s.grid[behind]) && rng.uniform() < opt.pull_probability;
    s.grid[dest] = with_player(s.grid[dest]);
    s.grid[player] = vacated(s.grid[player]);
    if (pull) {
      s.grid[player] = with_box(s.grid[player]);
      s.grid[behind] = vacated(s.grid[behind]);
    }
    player = dest;
  }
  if (s.solved()) return std::nullopt;
  if (!solve(s)) return std::nullopt;
  return s;
}

}  // namespace detail

/// Deterministic level for `seed`: 6x6 grid, 2 boxes, solvable within the
/// step limit (checked by the solver). Throws GeneratorExhausted when no
/// level is found within the attempt budget.
inline SokobanState reset(std::uint64_t seed, const LevelGenOptions& opt = {}) {
  if (opt.min_reverse_moves == 0 || opt.min_reverse_moves > opt.max_reverse_moves) {
    throw ContractViolation("level generator needs 0 < min_reverse_moves <= max_reverse_moves");
  }
  auto rng = seeded_rng(static_cast<std::int64_t>(seed), "sokoban/level");
  for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
    if (auto s = detail::try_generate(rng, opt)) return *s;
  }
  throw GeneratorExhausted("no solvable level for seed " + std::to_string(seed) + " after " +
                           std::to_string(opt.max_attempts) + " attempts; re-seed");
}

}  // namespace echo::env
