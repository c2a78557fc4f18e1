// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "echo/core/error.hpp"
#include "echo/core/rng.hpp"
#include "echo/core/trajectory.hpp"
#include "echo/env/features.hpp"

namespace echo::env {

inline constexpr int kGridSide = 6;
inline constexpr int kGridCells = kGridSide * kGridSide;
inline constexpr int kBoxCount = 2;
inline constexpr std::uint32_t kDefaultStepLimit = 60;

// Reward components.
inline constexpr double kBoxPlacedReward = 1.0;
inline constexpr double kBoxRemovedReward = -1.0;
inline constexpr double kCompletionReward = 10.0;
inline constexpr double kActionPenalty = -0.1;

enum class Cell : std::uint8_t {
  kWall = 0,
  kFloor = 1,
  kTarget = 2,
  kBox = 3,
  kBoxOnTarget = 4,
  kPlayer = 5,
  kPlayerOnTarget = 6,
};
inline constexpr std::uint32_t kCellCategories = 7;

enum class Action : std::uint8_t { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };
inline constexpr int kActionCount = 4;

inline constexpr bool is_target(Cell c) {
  return c == Cell::kTarget || c == Cell::kBoxOnTarget || c == Cell::kPlayerOnTarget;
}
inline constexpr bool has_box(Cell c) { return c == Cell::kBox || c == Cell::kBoxOnTarget; }
inline constexpr bool has_player(Cell c) {
  return c == Cell::kPlayer || c == Cell::kPlayerOnTarget;
}
// Walkable and empty.
inline constexpr bool is_free(Cell c) { return c == Cell::kFloor || c == Cell::kTarget; }

inline constexpr Cell with_box(Cell c) { return is_target(c) ? Cell::kBoxOnTarget : Cell::kBox; }
inline constexpr Cell with_player(Cell c) {
  return is_target(c) ? Cell::kPlayerOnTarget : Cell::kPlayer;
}
inline constexpr Cell vacated(Cell c) { return is_target(c) ? Cell::kTarget : Cell::kFloor; }

struct SokobanState {
  std::array<Cell, kGridCells> grid{};
  std::uint32_t steps_taken = 0;
  std::uint32_t step_limit = kDefaultStepLimit;

  Cell at(int row, int col) const { return grid[row * kGridSide + col]; }

  int player() const {
    for (int i = 0; i < kGridCells; ++i) {
      if (has_player(grid[i])) return i;
    }
    return -1;
  }

  int boxes_on_target() const {
    return static_cast<int>(std::count(grid.begin(), grid.end(), Cell::kBoxOnTarget));
  }

  int box_count() const {
    return static_cast<int>(std::count_if(grid.begin(), grid.end(), has_box));
  }

  int target_count() const {
    return static_cast<int>(std::count_if(grid.begin(), grid.end(), is_target));
  }

  bool solved() const { return boxes_on_target() == box_count(); }

  bool terminal() const { return solved() || steps_taken >= step_limit; }

  friend bool operator==(const SokobanState&, const SokobanState&) = default;
};

/// Throws ContractViolation unless the state has 2 boxes, 2 targets and one
/// player.
inline void validate(const SokobanState& s) {
  int players = 0;
  for (Cell c : s.grid) players += has_player(c) ? 1 : 0;
  if (players != 1) throw ContractViolation("sokoban state needs exactly one player");
  if (s.box_count() != kBoxCount) throw ContractViolation("sokoban state needs exactly 2 boxes");
  if (s.target_count() != kBoxCount) {
    throw ContractViolation("sokoban state needs exactly 2 targets");
  }
  if (s.step_limit == 0) throw ContractViolation("step_limit must be positive");
}

struct StepOutcome {
  SokobanState next_state;
  double reward = 0.0;
  bool terminal = false;
};

/// Neighbour of `cell` in direction `a`, or -1 off the grid.
inline int neighbour(int cell, Action a) {
  int r = cell / kGridSide;
  int c = cell % kGridSide;
  switch (a) {
    case Action::kUp: --r; break;
    case Action::kDown: ++r; break;
    case Action::kLeft: --c; break;
    case Action::kRight: ++c; break;
  }
  if (r < 0 || r >= kGridSide || c < 0 || c >= kGridSide) return -1;
  return r * kGridSide + c;
}

/// Reward for one transition: +1 per box newly on a target, -1 per box
/// newly off a target, +10 on completing the level, -0.1 per action.
inline double reward(const SokobanState& prev, const SokobanState& next) {
  int placed = 0;
  int removed = 0;
  for (int i = 0; i < kGridCells; ++i) {
    const bool before = prev.grid[i] == Cell::kBoxOnTarget;
    const bool after = next.grid[i] == Cell::kBoxOnTarget;
    placed += (!before && after) ? 1 : 0;
    removed += (before && !after) ? 1 : 0;
  }
  double r = kBoxPlacedReward * placed + kBoxRemovedReward * removed;
  if (next.solved() && !prev.solved()) r += kCompletionReward;
  return r + kActionPenalty;
}

/// Applies `a` without bookkeeping; returns false when the move is blocked.
inline bool apply_move(std::array<Cell, kGridCells>& grid, int player, Action a) {
  const int n = neighbour(player, a);
  if (n < 0 || grid[n] == Cell::kWall) return false;
  if (has_box(grid[n])) {
    const int m = neighbour(n, a);
    if (m < 0 || !is_free(grid[m])) return false;
    grid[m] = with_box(grid[m]);
    grid[n] = vacated(grid[n]);
  } else if (!is_free(grid[n])) {
    return false;
  }
  grid[n] = with_player(grid[n]);
  grid[player] = vacated(grid[player]);
  return true;
}

/// One transition. Blocked moves leave the grid unchanged but still consume
/// a step and pay the action penalty.
inline StepOutcome step(const SokobanState& s, Action a) {
  if (s.terminal()) throw ContractViolation("step() called on a terminal sokoban state");
  StepOutcome out{s, 0.0, false};
  apply_move(out.next_state.grid, s.player(), a);
  out.next_state.steps_taken = s.steps_taken + 1;
  out.reward = reward(s, out.next_state);
  out.terminal = out.next_state.terminal();
  return out;
}

inline StateEncoding encode_state(const SokobanState& s) {
  StateEncoding token(kGridCells);
  for (int i = 0; i < kGridCells; ++i) token[i] = static_cast<std::int32_t>(s.grid[i]);
  return token;
}

inline FeatureSpec sokoban_feature_spec() {
  return FeatureSpec{static_cast<std::uint32_t>(kGridCells), kCellCategories};
}

}  // namespace echo::env
