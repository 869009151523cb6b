#pragma once

// Shortest-path ground truth. Every legal move costs one step, so plain BFS
// from the goal gives the distance of every open cell to it.

#include <array>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

#include "hupa/gridworld.hpp"

namespace hupa {

inline constexpr int kUnreachable = std::numeric_limits<int>::max();

struct DistanceField {
  Cell goal;
  /// Steps to the goal; kUnreachable for walls and disconnected cells.
  std::array<int, kCellCount> dist{};

  int at(Cell c) const { return dist[cell_index(c)]; }
  bool reachable(Cell c) const { return in_bounds(c) && at(c) != kUnreachable; }
};

inline DistanceField distance_field(const Map& map, Cell goal) {
  if (!map.is_open(goal)) throw std::invalid_argument("distance_field: goal is not open");
  DistanceField field;
  field.goal = goal;
  field.dist.fill(kUnreachable);
  std::array<int, kCellCount> queue{};
  int head = 0;
  int tail = 0;
  field.dist[cell_index(goal)] = 0;
  queue[tail++] = cell_index(goal);
  while (head < tail) {
    const Cell u = cell_at(queue[head++]);
    const int du = field.at(u);
    // Moves are symmetric (only the target must be open), so expanding
    // forward moves from the goal yields distances *to* the goal.
    for (int k = 1; k <= kActionCount; ++k) {
      const Cell v = displaced(u, Action(k));
      if (!map.is_open(v) || field.at(v) != kUnreachable) continue;
      field.dist[cell_index(v)] = du + 1;
      queue[tail++] = cell_index(v);
    }
  }
  return field;
}

/// Actions that move `s` one step closer to the goal.
inline ActionSet optimal_action_set(const DistanceField& field, Cell s) {
  if (s == field.goal) throw std::invalid_argument("optimal_action_set: start equals goal");
  if (!field.reachable(s))
    throw std::invalid_argument("optimal_action_set: start is a wall or unreachable");
  const int want = field.at(s) - 1;
  ActionSet set = 0;
  for (int k = 1; k <= kActionCount; ++k) {
    const Cell t = displaced(s, Action(k));
    // Finite distance implies the target is open.
    if (in_bounds(t) && field.at(t) == want) set = static_cast<ActionSet>(set | (1u << (k - 1)));
  }
  return set;
}

/// Lowest-numbered optimal action; the deterministic training label.
inline Action canonical_action(const DistanceField& field, Cell s) {
  const ActionSet set = optimal_action_set(field, s);
  return Action::from_index(std::countr_zero(static_cast<unsigned>(set)));
}

/// Per-cell optimal sets and canonical labels for one goal. Entries for the
/// goal, walls and unreachable cells are empty (set 0, label 0).
struct OracleLabels {
  Cell goal;
  std::array<ActionSet, kCellCount> optimal_sets{};
  std::array<std::uint8_t, kCellCount> canonical{};

  ActionSet optimal_set(Cell c) const { return optimal_sets[cell_index(c)]; }
  Action label(Cell c) const {
    const auto k = canonical[cell_index(c)];
    if (k == 0) throw std::invalid_argument("no oracle label at this cell");
    return Action(k);
  }
};

inline OracleLabels oracle_labels(const DistanceField& field) {
  OracleLabels labels;
  labels.goal = field.goal;
  for (int i = 0; i < kCellCount; ++i) {
    const Cell c = cell_at(i);
    if (c == field.goal || field.dist[i] == kUnreachable) continue;
    const ActionSet set = optimal_action_set(field, c);
    labels.optimal_sets[i] = set;
    labels.canonical[i] = static_cast<std::uint8_t>(std::countr_zero(static_cast<unsigned>(set)) + 1);
  }
  return labels;
}

inline OracleLabels oracle_labels(const Map& map, Cell goal) {
  return oracle_labels(distance_field(map, goal));
}

/// Debug dump in the map text layout: '#' walls, 'G' goal, distance mod 10.
inline std::string distance_field_to_text(const Map& map, const DistanceField& field) {
  std::string out;
  for (int r = 0; r < kGridSize; ++r) {
    for (int c = 0; c < kGridSize; ++c) {
      const Cell cell{r, c};
      if (map.at(cell) == Tile::Wall)
        out.push_back('#');
      else if (cell == field.goal)
        out.push_back('G');
      else if (!field.reachable(cell))
        out.push_back('?');
      else
        out.push_back(static_cast<char>('0' + field.at(cell) % 10));
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace hupa
