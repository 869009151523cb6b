#pragma once

// Reachability analysis of deterministic policies.
//
// For a fixed goal every open cell gets at most one outgoing edge, the move
// the policy picks there (no edge if that move hits a wall). The reachable
// set C_g is everything whose forward path ends at g, found by a reverse
// BFS from g. The Reachability Ratio of a goal is |C_g| / |open cells|; over
// a goal set T we report the mean of the per-goal ratios.

#include <algorithm>
#include <array>
#include <bitset>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "hupa/gridworld.hpp"
#include "hupa/oracle.hpp"

namespace hupa {

/// Action id (1..8) chosen at state s for goal g.
using GoalPolicy = std::function<int(Cell s, Cell g)>;
/// Action id chosen at s for a goal fixed by the caller.
using StatePolicy = std::function<int(Cell s)>;

using CellSet = std::bitset<kCellCount>;

struct FunctionalGraph {
  Cell goal;
  /// Open cells in row-major order.
  std::vector<Cell> nodes;
  /// Successor cell index per grid cell, -1 for no edge (walls, the goal,
  /// and illegal moves).
  std::array<int, kCellCount> successor{};

  std::optional<Cell> next(Cell s) const {
    const int t = successor[static_cast<std::size_t>(cell_index(s))];
    if (t < 0) return std::nullopt;
    return cell_at(t);
  }
  std::size_t edge_count() const {
    return static_cast<std::size_t>(std::count_if(successor.begin(), successor.end(), [](int t) { return t >= 0; }));
  }
};

inline FunctionalGraph policy_graph(const StatePolicy& policy, const Map& map, Cell goal) {
  if (!map.is_open(goal)) throw std::invalid_argument("policy_graph: goal is not open");
  FunctionalGraph g;
  g.goal = goal;
  g.successor.fill(-1);
  g.nodes = map.open_cells();
  for (Cell s : g.nodes) {
    if (s == goal) continue;
    const int k = policy(s);
    if (k < 1 || k > kActionCount)
      throw std::invalid_argument("policy_graph: policy returned invalid action id " + std::to_string(k));
    if (auto t = apply_action(map, s, Action(k))) g.successor[static_cast<std::size_t>(cell_index(s))] = cell_index(*t);
  }
  return g;
}

/// Nodes whose successor path reaches the goal (goal included).
inline CellSet reachable_set(const FunctionalGraph& graph) {
  // Predecessor lists in CSR form.
  std::array<int, kCellCount + 1> start{};
  for (int t : graph.successor)
    if (t >= 0) ++start[static_cast<std::size_t>(t) + 1];
  for (int i = 0; i < kCellCount; ++i) start[static_cast<std::size_t>(i) + 1] += start[static_cast<std::size_t>(i)];
  std::array<int, kCellCount> fill = {};
  std::copy(start.begin(), start.end() - 1, fill.begin());
  std::vector<int> preds(static_cast<std::size_t>(start.back()));
  for (int s = 0; s < kCellCount; ++s)
    if (const int t = graph.successor[static_cast<std::size_t>(s)]; t >= 0)
      preds[static_cast<std::size_t>(fill[static_cast<std::size_t>(t)]++)] = s;

  CellSet reached;
  std::vector<int> queue{cell_index(graph.goal)};
  reached.set(static_cast<std::size_t>(cell_index(graph.goal)));
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const int u = queue[head];
    for (int p = start[static_cast<std::size_t>(u)]; p < start[static_cast<std::size_t>(u) + 1]; ++p) {
      const int v = preds[static_cast<std::size_t>(p)];
      if (!reached.test(static_cast<std::size_t>(v))) {
        reached.set(static_cast<std::size_t>(v));
        queue.push_back(v);
      }
    }
  }
  return reached;
}

inline std::vector<Cell> cells_of(const CellSet& set) {
  std::vector<Cell> out;
  for (int i = 0; i < kCellCount; ++i)
    if (set.test(static_cast<std::size_t>(i))) out.push_back(cell_at(i));
  return out;
}

struct ReachabilityReport {
  std::vector<Cell> goals;
  std::vector<CellSet> reachable;  // C_g per goal
  std::vector<double> rr_per_goal;
  double rr = 0;
};

inline ReachabilityReport reachability_ratio(const GoalPolicy& policy, const Map& map, std::span<const Cell> goals) {
  if (goals.empty()) throw std::invalid_argument("reachability_ratio: empty goal set");
  ReachabilityReport rep;
  double sum = 0;
  for (Cell g : goals) {
    const auto graph = policy_graph([&](Cell s) { return policy(s, g); }, map, g);
    CellSet c = reachable_set(graph);
    const double ratio = static_cast<double>(c.count()) / static_cast<double>(map.open_count());
    rep.goals.push_back(g);
    rep.reachable.push_back(c);
    rep.rr_per_goal.push_back(ratio);
    sum += ratio;
  }
  rep.rr = sum / static_cast<double>(goals.size());
  return rep;
}

struct RolloutResult {
  bool success = false;
  int steps = 0;
};

/// Follows the policy from s; fails when stuck, on a revisit, or after
/// max_steps moves.
inline RolloutResult rollout(const StatePolicy& policy, const Map& map, Cell s, Cell g, int max_steps) {
  CellSet visited;
  Cell cur = s;
  int steps = 0;
  while (cur != g) {
    if (steps >= max_steps) return {false, steps};
    visited.set(static_cast<std::size_t>(cell_index(cur)));
    const auto next = apply_action(map, cur, Action(policy(cur)));
    if (!next || visited.test(static_cast<std::size_t>(cell_index(*next)))) return {false, steps};
    cur = *next;
    ++steps;
  }
  return {true, steps};
}

/// Ground-truth policy: canonical BFS action (goal cell maps to action 1).
inline GoalPolicy oracle_policy(const Map& map) {
  auto cache = std::make_shared<std::optional<OracleLabels>>();
  return [map, cache](Cell s, Cell g) {
    if (!*cache || (*cache)->goal != g) *cache = oracle_labels(map, g);
    return s == g ? 1 : static_cast<int>((*cache)->canonical[static_cast<std::size_t>(cell_index(s))]);
  };
}

}  // namespace hupa
