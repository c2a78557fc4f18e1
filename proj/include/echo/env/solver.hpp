// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <queue>
#include <unordered_map>
#include <vector>

#include "echo/env/sokoban.hpp"

namespace echo::env {

/// Breadth-first search over (player, box positions). Returns a
/// minimal-length action sequence that solves `s` within its remaining step
/// budget, an empty sequence if `s` is already solved, or nullopt when no
/// solution fits.
inline std::optional<std::vector<Action>> solve(const SokobanState& s) {
  if (s.solved()) return std::vector<Action>{};
  if (s.steps_taken >= s.step_limit) return std::nullopt;
  const std::uint32_t budget = s.step_limit - s.steps_taken;

  // Static layer: walls and targets only.
  std::array<Cell, kGridCells> base{};
  std::vector<int> boxes;
  int player = -1;
  for (int i = 0; i < kGridCells; ++i) {
    const Cell c = s.grid[i];
    base[i] = c == Cell::kWall ? Cell::kWall : (is_target(c) ? Cell::kTarget : Cell::kFloor);
    if (has_box(c)) boxes.push_back(i);
    if (has_player(c)) player = i;
  }
  if (player < 0 || boxes.size() != static_cast<std::size_t>(kBoxCount)) return std::nullopt;

  using Key = std::uint32_t;
  auto key_of = [](int p, int b0, int b1) -> Key {
    if (b0 > b1) std::swap(b0, b1);
    return static_cast<Key>(p + kGridCells * (b0 + kGridCells * b1));
  };
  struct Node {
    int player;
    int b0;
    int b1;
  };
  struct Parent {
    Key from;
    Action via;
    std::uint32_t depth;
  };

  std::unordered_map<Key, Parent> seen;
  std::queue<Node> frontier;
  const Key start = key_of(player, boxes[0], boxes[1]);
  seen.emplace(start, Parent{start, Action::kUp, 0});
  frontier.push({player, boxes[0], boxes[1]});

  while (!frontier.empty()) {
    const Node n = frontier.front();
    frontier.pop();
    const Key k = key_of(n.player, n.b0, n.b1);
    const std::uint32_t depth = seen.at(k).depth;
    if (depth >= budget) continue;
    for (int ai = 0; ai < kActionCount; ++ai) {
      const auto a = static_cast<Action>(ai);
      const int to = neighbour(n.player, a);
      if (to < 0 || base[to] == Cell::kWall) continue;
      int b0 = n.b0;
      int b1 = n.b1;
      if (to == b0 || to == b1) {
        const int beyond = neighbour(to, a);
        if (beyond < 0 || base[beyond] == Cell::kWall || beyond == b0 || beyond == b1) continue;
        (to == b0 ? b0 : b1) = beyond;
      }
      const Key nk = key_of(to, b0, b1);
      if (seen.contains(nk)) continue;
      seen.emplace(nk, Parent{k, a, depth + 1});
      if (is_target(base[b0]) && is_target(base[b1])) {
        std::vector<Action> path;
        for (Key cur = nk; cur != start;) {
          const Parent& p = seen.at(cur);
          path.push_back(p.via);
          cur = p.from;
        }
        std::reverse(path.begin(), path.end());
        return path;
      }
      frontier.push({to, b0, b1});
    }
  }
  return std::nullopt;
}

}  // namespace echo::env
