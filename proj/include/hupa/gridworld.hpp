#pragma once

// Nine-room gridworld: 3x3 rooms of 9x9 open tiles separated by walls, with
// one door in the middle of every separating wall. A map is the base layout
// with three doors blocked such that all rooms stay connected.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hupa {

inline constexpr int kGridSize = 31;
inline constexpr int kCellCount = kGridSize * kGridSize;
inline constexpr int kDoorCount = 12;
inline constexpr int kBlockedDoors = 3;
inline constexpr int kActionCount = 8;
inline constexpr int kBaseOpenCount = 741;

struct Cell {
  int row = 0;
  int col = 0;

  friend constexpr bool operator==(Cell, Cell) = default;
  friend constexpr auto operator<=>(Cell, Cell) = default;
};

constexpr bool in_bounds(Cell c) {
  return c.row >= 0 && c.row < kGridSize && c.col >= 0 && c.col < kGridSize;
}

constexpr int cell_index(Cell c) { return c.row * kGridSize + c.col; }
constexpr Cell cell_at(int index) { return {index / kGridSize, index % kGridSize}; }

inline std::ostream& operator<<(std::ostream& os, Cell c) {
  return os << '(' << c.row << ',' << c.col << ')';
}

/// One of the eight king moves, numbered k = 1..8 for the angle k*pi/4
/// measured counter-clockwise from "right" with rows growing downward.
class Action {
 public:
  constexpr Action() = default;
  constexpr explicit Action(int k) : k_(k) {
    if (k < 1 || k > kActionCount) throw std::out_of_range("action id must be in 1..8");
  }
  /// Action for a zero-based class index 0..7.
  static constexpr Action from_index(int i) { return Action(i + 1); }

  constexpr int id() const { return k_; }
  constexpr int index() const { return k_ - 1; }

  constexpr int d_col() const { return kDeltas[k_ - 1][0]; }
  constexpr int d_row() const { return kDeltas[k_ - 1][1]; }

  friend constexpr bool operator==(Action, Action) = default;

 private:
  static constexpr int kDeltas[kActionCount][2] = {
      {+1, -1}, {0, -1}, {-1, -1}, {-1, 0}, {-1, +1}, {0, +1}, {+1, +1}, {+1, 0}};
  int k_ = 1;
};

inline constexpr Cell displaced(Cell s, Action a) {
  return {s.row + a.d_row(), s.col + a.d_col()};
}

/// Bit set over the eight actions, bit (k-1) for action k.
using ActionSet = std::uint8_t;

constexpr bool contains(ActionSet set, Action a) { return (set >> a.index()) & 1u; }

/// Fixed door table. Doors 0..5 sit in the vertical walls (cols 10, 20),
/// doors 6..11 in the horizontal walls (rows 10, 20), each sorted by (row, col).
inline constexpr std::array<Cell, kDoorCount> kDoorCells = {{
    {5, 10}, {5, 20}, {15, 10}, {15, 20}, {25, 10}, {25, 20},
    {10, 5}, {10, 15}, {10, 25}, {20, 5}, {20, 15}, {20, 25},
}};

/// The two rooms (index 3*room_row + room_col) joined by a door.
constexpr std::array<int, 2> door_rooms(int door) {
  const Cell c = kDoorCells[door];
  if (door < 6) {
    const int rr = c.row / 10;
    const int left = c.col / 10 - 1;
    return {3 * rr + left, 3 * rr + left + 1};
  }
  const int rc = c.col / 10;
  const int top = c.row / 10 - 1;
  return {3 * top + rc, 3 * (top + 1) + rc};
}

/// Set of blocked doors. Used both for candidate sets of any size and for
/// validated map identities (exactly three doors, rooms connected).
class DoorMask {
 public:
  constexpr DoorMask() = default;
  constexpr explicit DoorMask(std::uint16_t bits) : bits_(bits) {
    if (bits >> kDoorCount) throw std::out_of_range("door index out of range");
  }
  static DoorMask of(std::initializer_list<int> doors) {
    std::uint16_t bits = 0;
    for (int d : doors) {
      if (d < 0 || d >= kDoorCount) throw std::out_of_range("door index out of range");
      bits = static_cast<std::uint16_t>(bits | (1u << d));
    }
    return DoorMask(bits);
  }

  constexpr bool blocked(int door) const { return (bits_ >> door) & 1u; }
  constexpr int size() const { return std::popcount(bits_); }
  constexpr std::uint16_t bits() const { return bits_; }

  std::vector<int> doors() const {
    std::vector<int> out;
    for (int d = 0; d < kDoorCount; ++d)
      if (blocked(d)) out.push_back(d);
    return out;
  }

  friend constexpr bool operator==(DoorMask, DoorMask) = default;

 private:
  std::uint16_t bits_ = 0;
};

/// True iff the 3x3 room graph minus the blocked doors is connected.
inline bool rooms_connected(DoorMask mask) {
  std::array<bool, 9> seen{};
  std::array<int, 9> stack{};
  int top = 0;
  stack[top++] = 0;
  seen[0] = true;
  int visited = 1;
  while (top > 0) {
    const int room = stack[--top];
    for (int d = 0; d < kDoorCount; ++d) {
      if (mask.blocked(d)) continue;
      const auto [a, b] = door_rooms(d);
      const int other = a == room ? b : (b == room ? a : -1);
      if (other >= 0 && !seen[other]) {
        seen[other] = true;
        ++visited;
        stack[top++] = other;
      }
    }
  }
  return visited == 9;
}

inline bool is_valid_mask(DoorMask mask) {
  return mask.size() == kBlockedDoors && rooms_connected(mask);
}

/// All valid masks in lexicographic order of their sorted door triples.
inline const std::vector<DoorMask>& enumerate_door_masks() {
  static const std::vector<DoorMask> masks = [] {
    std::vector<DoorMask> out;
    for (int a = 0; a < kDoorCount; ++a)
      for (int b = a + 1; b < kDoorCount; ++b)
        for (int c = b + 1; c < kDoorCount; ++c) {
          const DoorMask m = DoorMask::of({a, b, c});
          if (rooms_connected(m)) out.push_back(m);
        }
    return out;
  }();
  return masks;
}

inline int map_id_of(DoorMask mask) {
  const auto& all = enumerate_door_masks();
  const auto it = std::find(all.begin(), all.end(), mask);
  if (it == all.end()) throw std::invalid_argument("mask is not a valid map");
  return static_cast<int>(it - all.begin());
}

enum class Tile : std::uint8_t { Open = 0, Wall = 1 };

class Map {
 public:
  Tile at(Cell c) const { return grid_[cell_index(c)]; }
  Tile at(int row, int col) const { return at(Cell{row, col}); }
  bool is_open(Cell c) const { return in_bounds(c) && at(c) == Tile::Open; }
  int open_count() const { return open_count_; }
  DoorMask mask() const { return mask_; }
  const std::array<Tile, kCellCount>& grid() const { return grid_; }

  /// Open cells in row-major order.
  std::vector<Cell> open_cells() const {
    std::vector<Cell> out;
    out.reserve(static_cast<std::size_t>(open_count_));
    for (int i = 0; i < kCellCount; ++i)
      if (grid_[i] == Tile::Open) out.push_back(cell_at(i));
    return out;
  }

  /// Builds a map from a raw grid, e.g. text fixtures that are not members
  /// of the nine-room family.
  static Map from_grid(const std::array<Tile, kCellCount>& grid, DoorMask mask = {}) {
    Map m;
    m.grid_ = grid;
    m.mask_ = mask;
    m.open_count_ = static_cast<int>(std::count(grid.begin(), grid.end(), Tile::Open));
    return m;
  }

  friend bool operator==(const Map&, const Map&) = default;

 private:
  std::array<Tile, kCellCount> grid_{};
  DoorMask mask_;
  int open_count_ = 0;
};

namespace detail {
constexpr bool on_wall_line(int v) { return v % 10 == 0; }
}  // namespace detail

/// Base layout with all twelve doors open.
inline Map base_map() {
  std::array<Tile, kCellCount> grid{};
  for (int r = 0; r < kGridSize; ++r)
    for (int c = 0; c < kGridSize; ++c)
      grid[cell_index({r, c})] =
          detail::on_wall_line(r) || detail::on_wall_line(c) ? Tile::Wall : Tile::Open;
  for (Cell door : kDoorCells) grid[cell_index(door)] = Tile::Open;
  return Map::from_grid(grid);
}

inline Map build_map(DoorMask mask) {
  if (mask.size() != kBlockedDoors) throw std::invalid_argument("mask must block exactly 3 doors");
  if (!rooms_connected(mask)) throw std::invalid_argument("mask disconnects the rooms");
  std::array<Tile, kCellCount> grid = base_map().grid();
  for (int d = 0; d < kDoorCount; ++d)
    if (mask.blocked(d)) grid[cell_index(kDoorCells[d])] = Tile::Wall;
  return Map::from_grid(grid, mask);
}

/// Maps for every enumerated mask, indexed by map id.
inline const std::vector<Map>& all_maps() {
  static const std::vector<Map> maps = [] {
    std::vector<Map> out;
    for (DoorMask m : enumerate_door_masks()) out.push_back(build_map(m));
    return out;
  }();
  return maps;
}

/// Successor of `s` under `a`, or nothing if the target is a wall or off the
/// grid. Only the target tile matters, so diagonals may cut wall corners.
inline std::optional<Cell> apply_action(const Map& map, Cell s, Action a) {
  if (!map.is_open(s)) throw std::invalid_argument("apply_action: start cell is not open");
  const Cell t = displaced(s, a);
  if (!map.is_open(t)) return std::nullopt;
  return t;
}

/// Single-channel image, 1.0 for walls.
struct MapImage {
  std::array<float, kCellCount> pixels{};

  float at(int row, int col) const { return pixels[cell_index({row, col})]; }
  friend bool operator==(const MapImage&, const MapImage&) = default;
};

inline MapImage map_to_image(const Map& map) {
  MapImage img;
  for (int i = 0; i < kCellCount; ++i) img.pixels[i] = map.grid()[i] == Tile::Wall ? 1.0f : 0.0f;
  return img;
}

inline Map image_to_map(const MapImage& img, DoorMask mask = {}) {
  std::array<Tile, kCellCount> grid{};
  for (int i = 0; i < kCellCount; ++i) {
    if (img.pixels[i] != 0.0f && img.pixels[i] != 1.0f)
      throw std::invalid_argument("map image pixels must be 0 or 1");
    grid[i] = img.pixels[i] == 1.0f ? Tile::Wall : Tile::Open;
  }
  return Map::from_grid(grid, mask);
}

// Text format: 31 lines of 31 characters, '#' wall and '.' open.

inline std::string map_to_text(const Map& map) {
  std::string out;
  out.reserve(kGridSize * (kGridSize + 1));
  for (int r = 0; r < kGridSize; ++r) {
    for (int c = 0; c < kGridSize; ++c) out.push_back(map.at(r, c) == Tile::Wall ? '#' : '.');
    out.push_back('\n');
  }
  return out;
}

inline Map map_from_text(std::string_view text) {
  std::array<Tile, kCellCount> grid{};
  std::istringstream in{std::string(text)};
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && row == kGridSize) continue;
    if (row >= kGridSize) throw std::invalid_argument("map text: too many lines");
    if (static_cast<int>(line.size()) != kGridSize)
      throw std::invalid_argument("map text: line " + std::to_string(row + 1) +
                                  " must have 31 characters");
    for (int c = 0; c < kGridSize; ++c) {
      if (line[c] == '#')
        grid[cell_index({row, c})] = Tile::Wall;
      else if (line[c] == '.')
        grid[cell_index({row, c})] = Tile::Open;
      else
        throw std::invalid_argument("map text: unexpected character on line " +
                                    std::to_string(row + 1));
    }
    ++row;
  }
  if (row != kGridSize) throw std::invalid_argument("map text: expected 31 lines");
  return Map::from_grid(grid);
}

/// Coordinates of every open cell of the base map (741 of them), row-major.
inline const std::vector<Cell>& base_open_cells() {
  static const std::vector<Cell> cells = base_map().open_cells();
  return cells;
}

}  // namespace hupa
