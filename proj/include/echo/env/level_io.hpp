// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "echo/core/error.hpp"
#include "echo/env/sokoban.hpp"

namespace echo::env {

// ASCII level format, one row per line:
//   # wall   . floor   T target   B box   P player   * box on target
//   + player on target
inline char cell_glyph(Cell c) {
  switch (c) {
    case Cell::kWall: return '#';
    case Cell::kFloor: return '.';
    case Cell::kTarget: return 'T';
    case Cell::kBox: return 'B';
    case Cell::kBoxOnTarget: return '*';
    case Cell::kPlayer: return 'P';
    case Cell::kPlayerOnTarget: return '+';
  }
  return '?';
}

inline Cell cell_from_glyph(char g) {
  switch (g) {
    case '#': return Cell::kWall;
    case '.': return Cell::kFloor;
    case 'T': return Cell::kTarget;
    case 'B': return Cell::kBox;
    case '*': return Cell::kBoxOnTarget;
    case 'P': return Cell::kPlayer;
    case '+': return Cell::kPlayerOnTarget;
    default: throw SchemaError(std::string("unknown level glyph '") + g + "'");
  }
}

inline std::string render_level(const SokobanState& s) {
  std::string out;
  for (int r = 0; r < kGridSide; ++r) {
    for (int c = 0; c < kGridSide; ++c) out.push_back(cell_glyph(s.at(r, c)));
    out.push_back('\n');
  }
  return out;
}

/// Parses a 6x6 ASCII level; blank lines and trailing whitespace are ignored.
inline SokobanState parse_level(const std::string& text, std::uint32_t step_limit = kDefaultStepLimit) {
  SokobanState s;
  s.step_limit = step_limit;
  std::istringstream in(text);
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    if (row >= kGridSide) throw SchemaError("level has more than 6 rows");
    if (line.size() != static_cast<std::size_t>(kGridSide)) {
      throw SchemaError("level row " + std::to_string(row) + " is not 6 cells wide");
    }
    for (int c = 0; c < kGridSide; ++c) s.grid[row * kGridSide + c] = cell_from_glyph(line[c]);
    ++row;
  }
  if (row != kGridSide) throw SchemaError("level has fewer than 6 rows");
  try {
    validate(s);
  } catch (const ContractViolation& e) {
    throw SchemaError(e.what());
  }
  return s;
}

inline SokobanState load_level(const std::filesystem::path& path,
                               std::uint32_t step_limit = kDefaultStepLimit) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open level " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_level(ss.str(), step_limit);
}

}  // namespace echo::env
