#include "hupa/metrics.hpp"

#include <gtest/gtest.h>

#include <random>

#include "hupa/render.hpp"

namespace hupa {
namespace {

// Column 7, rows 3..12 open; everything else wall.
Map corridor() {
  std::array<Tile, kCellCount> grid;
  grid.fill(Tile::Wall);
  for (int r = 3; r <= 12; ++r) grid[static_cast<std::size_t>(cell_index({r, 7}))] = Tile::Open;
  return Map::from_grid(grid);
}

StatePolicy random_policy(std::mt19937_64& rng, const Map& map, Cell g, double oracle_bias) {
  std::array<int, kCellCount> table{};
  const auto labels = oracle_labels(map, g);
  std::uniform_real_distribution<double> u(0, 1);
  for (Cell s : map.open_cells()) {
    if (s == g) continue;
    const auto i = static_cast<std::size_t>(cell_index(s));
    table[i] = u(rng) < oracle_bias ? labels.canonical[i] : static_cast<int>(rng() % 8) + 1;
  }
  return [table](Cell s) { return table[static_cast<std::size_t>(cell_index(s))]; };
}

TEST(PolicyGraph, OracleHasAnEdgeEverywhereButTheGoal) {
  const Map& map = all_maps()[17];
  const Cell g{14, 3};
  const auto oracle = oracle_policy(map);
  const auto graph = policy_graph([&](Cell s) { return oracle(s, g); }, map, g);
  EXPECT_EQ(graph.edge_count(), static_cast<std::size_t>(map.open_count() - 1));
  EXPECT_FALSE(graph.next(g).has_value());
  for (Cell s : graph.nodes)
    if (auto t = graph.next(s)) EXPECT_TRUE(map.is_open(*t));
}

TEST(PolicyGraph, WallPolicyHasNoEdges) {
  const Map m = corridor();
  const auto graph = policy_graph([](Cell) { return 4; }, m, {3, 7});
  EXPECT_EQ(graph.edge_count(), 0u);
  EXPECT_EQ(reachable_set(graph).count(), 1u);
}

TEST(PolicyGraph, InvalidActionAndGoalAreErrors) {
  const Map m = corridor();
  EXPECT_THROW(policy_graph([](Cell) { return 9; }, m, {3, 7}), std::invalid_argument);
  EXPECT_THROW(policy_graph([](Cell) { return 0; }, m, {3, 7}), std::invalid_argument);
  EXPECT_THROW(policy_graph([](Cell) { return 1; }, m, {0, 0}), std::invalid_argument);
}

TEST(ReachableSet, CorridorWithUpPolicyIsTheColumn) {
  const Map m = corridor();
  const CellSet c = reachable_set(policy_graph([](Cell) { return 2; }, m, {3, 7}));
  EXPECT_EQ(c.count(), 10u);
  for (int r = 3; r <= 12; ++r) EXPECT_TRUE(c.test(static_cast<std::size_t>(cell_index({r, 7}))));
}

TEST(ReachableSet, CorridorGoalInTheMiddle) {
  // Up policy with the goal at row 8: only rows 8..12 arrive.
  const Map m = corridor();
  const CellSet c = reachable_set(policy_graph([](Cell) { return 2; }, m, {8, 7}));
  EXPECT_EQ(cells_of(c).size(), 5u);
  EXPECT_FALSE(c.test(static_cast<std::size_t>(cell_index({5, 7}))));
}

TEST(ReachableSet, TwoCycleIsExcluded) {
  // Rows 10 and 11 point at each other; everything else goes up.
  const Map m = corridor();
  const StatePolicy p = [](Cell s) { return s.row == 10 ? 6 : 2; };
  const CellSet c = reachable_set(policy_graph(p, m, {3, 7}));
  EXPECT_FALSE(c.test(static_cast<std::size_t>(cell_index({10, 7}))));
  EXPECT_FALSE(c.test(static_cast<std::size_t>(cell_index({11, 7}))));
  EXPECT_FALSE(c.test(static_cast<std::size_t>(cell_index({12, 7}))));
  EXPECT_EQ(c.count(), 7u);
  EXPECT_FALSE(rollout(p, m, {11, 7}, {3, 7}, 100).success);
}

TEST(ReachabilityRatio, OracleIsOne) {
  for (int id : {0, 50, 163}) {
    const Map& map = all_maps()[static_cast<std::size_t>(id)];
    const std::vector<Cell> goals = {{1, 1}, {15, 15}, {29, 22}};
    const auto rep = reachability_ratio(oracle_policy(map), map, goals);
    EXPECT_EQ(rep.rr, 1.0);
    for (const auto& c : rep.reachable) EXPECT_EQ(c.count(), 738u);
  }
}

TEST(ReachabilityRatio, SealedRoomFixture) {
  // Top-left room (rows/cols 1..9) never sends anyone out: its cells move up
  // into the outer wall. Its two doors push the agent away from it, and all
  // other cells follow shortest paths computed with the room walled off.
  std::optional<int> pick;
  for (int id = 0; id < 164 && !pick; ++id) {
    const Map& m = all_maps()[static_cast<std::size_t>(id)];
    if (!m.is_open({5, 10}) || !m.is_open({10, 5})) continue;
    auto grid = m.grid();
    for (int r = 1; r <= 10; ++r)
      for (int c = 1; c <= 10; ++c) grid[static_cast<std::size_t>(cell_index({r, c}))] = Tile::Wall;
    const Map walled = Map::from_grid(grid);
    const auto field = distance_field(walled, {25, 25});
    bool connected = true;
    for (Cell s : walled.open_cells()) connected = connected && field.reachable(s);
    if (connected) pick = id;
  }
  ASSERT_TRUE(pick.has_value());
  const Map& map = all_maps()[static_cast<std::size_t>(*pick)];
  auto grid = map.grid();
  for (int r = 1; r <= 10; ++r)
    for (int c = 1; c <= 10; ++c) grid[static_cast<std::size_t>(cell_index({r, c}))] = Tile::Wall;
  const Map walled = Map::from_grid(grid);

  const std::vector<Cell> goals = {{25, 25}, {15, 3}, {3, 27}};
  for (Cell g : goals) {
    const auto labels = oracle_labels(walled, g);
    const StatePolicy p = [&](Cell s) {
      if (s.row <= 9 && s.col <= 9) return 2;
      if (s == Cell{5, 10}) return 8;
      if (s == Cell{10, 5}) return 6;
      return static_cast<int>(labels.canonical[static_cast<std::size_t>(cell_index(s))]);
    };
    const auto rep = reachability_ratio([&](Cell s, Cell) { return p(s); }, map, std::vector<Cell>{g});
    EXPECT_NEAR(rep.rr, 657.0 / 738.0, 1e-15);
    EXPECT_NEAR(rep.rr, 0.8902, 1e-4);
    // Brute count with rollouts.
    int ok = 0;
    for (Cell s : map.open_cells()) ok += rollout(p, map, s, g, 1000).success;
    EXPECT_EQ(ok, 657);
  }
}

TEST(ReachabilityRatio, SingletonAndOrderInvariance) {
  const Map& map = all_maps()[3];
  std::mt19937_64 rng(4);
  std::vector<StatePolicy> per_goal;
  std::vector<Cell> goals = {{2, 2}, {12, 28}, {27, 14}, {5, 23}};
  for (Cell g : goals) per_goal.push_back(random_policy(rng, map, g, 0.8));
  auto policy = [&](Cell s, Cell g) {
    const auto it = std::find(goals.begin(), goals.end(), g);
    return per_goal[static_cast<std::size_t>(it - goals.begin())](s);
  };
  const auto rep = reachability_ratio(policy, map, goals);
  const auto single = reachability_ratio(policy, map, std::vector<Cell>{goals[1]});
  EXPECT_EQ(single.rr, static_cast<double>(rep.reachable[1].count()) / 738.0);
  std::vector<Cell> reversed(goals.rbegin(), goals.rend());
  EXPECT_NEAR(reachability_ratio(policy, map, reversed).rr, rep.rr, 1e-15);
  EXPECT_THROW(reachability_ratio(policy, map, std::vector<Cell>{}), std::invalid_argument);
  for (const auto& c : rep.reachable)
    for (Cell g : goals) EXPECT_TRUE(rep.rr >= 0.0 && rep.rr <= 1.0 && c.count() >= 1 && map.is_open(g));
}

TEST(Rollout, StartAtGoalSucceedsImmediately) {
  const Map m = corridor();
  const auto r = rollout([](Cell) { return 4; }, m, {5, 7}, {5, 7}, 10);
  EXPECT_TRUE(r.success);
  EXPECT_EQ(r.steps, 0);
}

TEST(Rollout, StuckAndStepLimit) {
  const Map m = corridor();
  EXPECT_FALSE(rollout([](Cell) { return 4; }, m, {9, 7}, {3, 7}, 100).success);
  EXPECT_FALSE(rollout([](Cell) { return 2; }, m, {12, 7}, {3, 7}, 5).success);
  const auto ok = rollout([](Cell) { return 2; }, m, {12, 7}, {3, 7}, 9);
  EXPECT_TRUE(ok.success);
  EXPECT_EQ(ok.steps, 9);
}

TEST(CrossOracle, ReachableSetMatchesRolloutOnRandomPolicies) {
  std::mt19937_64 rng(2024);
  int agree = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Map& map = all_maps()[rng() % all_maps().size()];
    const auto cells = map.open_cells();
    const Cell g = cells[rng() % cells.size()];
    const Cell s = cells[rng() % cells.size()];
    const StatePolicy p = random_policy(rng, map, g, (trial % 5) / 4.0);
    const CellSet c = reachable_set(policy_graph(p, map, g));
    const bool in_set = c.test(static_cast<std::size_t>(cell_index(s)));
    agree += in_set == rollout(p, map, s, g, map.open_count()).success;
  }
  EXPECT_EQ(agree, 1000);
}

TEST(Monotonicity, OracleOverrideOutsideReachableSetNeverHurts) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const Map& map = all_maps()[rng() % all_maps().size()];
    const auto cells = map.open_cells();
    const Cell g = cells[rng() % cells.size()];
    const StatePolicy p = random_policy(rng, map, g, 0.7);
    const CellSet c = reachable_set(policy_graph(p, map, g));
    const auto labels = oracle_labels(map, g);
    const StatePolicy q = [&](Cell s) {
      const auto i = static_cast<std::size_t>(cell_index(s));
      return c.test(i) ? p(s) : static_cast<int>(labels.canonical[i]);
    };
    const CellSet d = reachable_set(policy_graph(q, map, g));
    EXPECT_GE(d.count(), c.count());
    EXPECT_EQ((c & ~d).count(), 0u);
  }
}

TEST(Render, PaletteAndHeader) {
  const Map& map = all_maps()[0];
  const Cell g{15, 15};
  const auto oracle = oracle_policy(map);
  const StatePolicy sp = [&](Cell s) { return oracle(s, g); };
  const CellSet c = reachable_set(policy_graph(sp, map, g));
  const Pixmap img = render_reachability(map, c, g);
  const auto bytes = encode_ppm(img);
  const std::string header = "P6\n31 31\n255\n";
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(header.size())), header);
  EXPECT_EQ(bytes.size(), header.size() + 31 * 31 * 3);
  const Pixmap back = decode_ppm(bytes);
  EXPECT_EQ(back.pixels, img.pixels);
  EXPECT_EQ(back.at(0, 0), (Rgb{255, 255, 0}));
  EXPECT_EQ(back.at(15, 15), (Rgb{255, 0, 0}));
  EXPECT_EQ(std::count(back.pixels.begin(), back.pixels.end(), kUnreachableColor), 0);
  EXPECT_EQ(std::count(back.pixels.begin(), back.pixels.end(), kReachableColor), 737);
}

TEST(Render, UnreachableCellsAreBlue) {
  const Map m = corridor();
  const StatePolicy p = [](Cell s) { return s.row == 10 ? 6 : 2; };
  const CellSet c = reachable_set(policy_graph(p, m, {3, 7}));
  const Pixmap img = render_reachability(m, c, {3, 7});
  EXPECT_EQ(std::count(img.pixels.begin(), img.pixels.end(), kUnreachableColor), 3);
  EXPECT_EQ(img.at(7, 11), kUnreachableColor);
}

TEST(Render, ArrowsAreHueCoded) {
  EXPECT_EQ(hue_color(0), (Rgb{255, 0, 0}));
  EXPECT_EQ(hue_color(120), (Rgb{0, 255, 0}));
  EXPECT_EQ(hue_color(360), hue_color(0));
  const Map m = corridor();
  const StatePolicy p = [](Cell) { return 2; };
  const CellSet c = reachable_set(policy_graph(p, m, {3, 7}));
  const Pixmap img = render_policy_arrows(m, p, c, {3, 7}, 11);
  EXPECT_EQ(img.width, 341);
  // Action 2 points up from the centre of its cell in hue 90 degrees.
  EXPECT_EQ(img.at(83, 90), hue_color(90));
  EXPECT_NO_THROW(decode_ppm(encode_ppm(img)));
}

TEST(Render, ReaderRejectsBadFiles) {
  const std::string junk = "P3\n1 1\n255\n000";
  EXPECT_THROW(decode_ppm(std::span(reinterpret_cast<const std::uint8_t*>(junk.data()), junk.size())), FormatError);
  const std::string short_raster = "P6\n2 2\n255\nabc";
  EXPECT_THROW(decode_ppm(std::span(reinterpret_cast<const std::uint8_t*>(short_raster.data()), short_raster.size())),
               FormatError);
}

}  // namespace
}  // namespace hupa
