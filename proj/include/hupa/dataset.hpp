#pragma once

// Train/validation/test splits over maps and goal coordinates, sample
// enumeration with oracle labels, and the binary dataset file.
//
// Dataset file layout (little-endian):
//   "HUPADS1" | version u16 | sample count u64 | seed u64 |
//   records (8 bytes each: map_id u16, s_row u8, s_col u8, g_row u8,
//            g_col u8, label u8, optimal_mask u8) | CRC-32 of records u32

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hupa/binary_io.hpp"
#include "hupa/gridworld.hpp"
#include "hupa/oracle.hpp"

namespace hupa {

struct SplitConfig {
  int train_maps = 50;
  int val_maps = 5;
  int test_maps = 20;
  /// Partition of the 741 base-map open coordinates into train/val/test goals.
  std::array<double, 3> goal_fractions = {0.4, 0.1, 0.5};
  /// Fraction of all coordinates actually used as training goals; a nested
  /// prefix of the train partition. Negative means the whole partition.
  double train_goal_fraction = -1.0;
  double start_fraction = 1.0;
};

enum class Split { train, val, test };

inline std::string_view split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + std::string(s) + "'");
}

struct SplitPlan {
  std::uint64_t seed = 0;
  /// Map ids (indices into enumerate_door_masks), ascending within a split.
  std::vector<int> train_maps, val_maps, test_maps;
  /// Goal coordinates, row-major sorted within a split.
  std::vector<Cell> train_goals, val_goals, test_goals;
  double start_fraction = 1.0;

  const std::vector<int>& maps(Split s) const {
    return s == Split::train ? train_maps : s == Split::val ? val_maps : test_maps;
  }
  const std::vector<Cell>& goals(Split s) const {
    return s == Split::train ? train_goals : s == Split::val ? val_goals : test_goals;
  }
  std::vector<DoorMask> masks(Split s) const {
    std::vector<DoorMask> out;
    for (int id : maps(s)) out.push_back(enumerate_door_masks()[static_cast<std::size_t>(id)]);
    return out;
  }

  friend bool operator==(const SplitPlan&, const SplitPlan&) = default;
};

/// splitmix64 finalizer; derives independent stream seeds from a base seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) { return mix_seed(mix_seed(a) ^ b); }

/// Test items are drawn first from each shuffled pool, then validation, then
/// training, so test/val sets do not move when only the training share
/// changes and smaller training sets are prefixes of larger ones.
inline SplitPlan make_splits(std::uint64_t seed, const SplitConfig& cfg = {}) {
  const int total_maps = static_cast<int>(enumerate_door_masks().size());
  if (cfg.train_maps < 0 || cfg.val_maps < 0 || cfg.test_maps < 0 ||
      cfg.train_maps + cfg.val_maps + cfg.test_maps > total_maps)
    throw std::invalid_argument("make_splits: map counts exceed the " + std::to_string(total_maps) +
                                " available maps");
  const double fsum = cfg.goal_fractions[0] + cfg.goal_fractions[1] + cfg.goal_fractions[2];
  if (std::abs(fsum - 1.0) > 1e-9 || *std::min_element(cfg.goal_fractions.begin(), cfg.goal_fractions.end()) < 0)
    throw std::invalid_argument("make_splits: goal fractions must be non-negative and sum to 1");
  if (!(cfg.start_fraction > 0.0 && cfg.start_fraction <= 1.0))
    throw std::invalid_argument("make_splits: start_fraction must be in (0, 1]");
  if (cfg.train_goal_fraction > cfg.goal_fractions[0] + 1e-12)
    throw std::invalid_argument("make_splits: train_goal_fraction exceeds the train goal partition");

  SplitPlan plan;
  plan.seed = seed;
  plan.start_fraction = cfg.start_fraction;

  std::mt19937_64 map_rng(mix_seed(seed, 0x6d617073));  // "maps"
  std::vector<int> ids(static_cast<std::size_t>(total_maps));
  std::iota(ids.begin(), ids.end(), 0);
  std::shuffle(ids.begin(), ids.end(), map_rng);
  auto take = [](auto& from, std::size_t& pos, std::size_t n) {
    auto first = from.begin() + static_cast<std::ptrdiff_t>(pos);
    std::vector<typename std::decay_t<decltype(from)>::value_type> out(first, first + static_cast<std::ptrdiff_t>(n));
    pos += n;
    return out;
  };
  std::size_t pos = 0;
  plan.test_maps = take(ids, pos, static_cast<std::size_t>(cfg.test_maps));
  plan.val_maps = take(ids, pos, static_cast<std::size_t>(cfg.val_maps));
  plan.train_maps = take(ids, pos, static_cast<std::size_t>(cfg.train_maps));

  std::mt19937_64 goal_rng(mix_seed(seed, 0x676f616c));  // "goal"
  std::vector<Cell> coords = base_open_cells();
  std::shuffle(coords.begin(), coords.end(), goal_rng);
  const auto n = static_cast<double>(coords.size());
  const auto n_train = static_cast<std::size_t>(std::floor(cfg.goal_fractions[0] * n + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(cfg.goal_fractions[1] * n + 1e-9));
  const std::size_t n_test = coords.size() - n_train - n_val;
  pos = 0;
  plan.test_goals = take(coords, pos, n_test);
  plan.val_goals = take(coords, pos, n_val);
  plan.train_goals = take(coords, pos, n_train);
  if (cfg.train_goal_fraction >= 0.0) {
    const auto used = static_cast<std::size_t>(std::floor(cfg.train_goal_fraction * n + 1e-9));
    plan.train_goals.resize(std::min(used, plan.train_goals.size()));
  }

  for (auto* v : {&plan.train_maps, &plan.val_maps, &plan.test_maps}) std::sort(v->begin(), v->end());
  for (auto* v : {&plan.train_goals, &plan.val_goals, &plan.test_goals}) std::sort(v->begin(), v->end());
  return plan;
}

/// One supervised example; the image is implied by map_id.
struct Sample {
  std::uint16_t map_id = 0;
  std::uint8_t s_row = 0, s_col = 0;
  std::uint8_t g_row = 0, g_col = 0;
  std::uint8_t label = 0;         // canonical action id 1..8
  std::uint8_t optimal_mask = 0;  // ActionSet

  Cell s() const { return {s_row, s_col}; }
  Cell g() const { return {g_row, g_col}; }

  friend bool operator==(const Sample&, const Sample&) = default;
};

enum class StartSelection {
  subsample,   // the seeded start_fraction share of starts
  complement,  // the starts left out by the subsample
  all,
};

/// Seeded subset of open starts (goal excluded) for one (map, goal) pair,
/// returned as a per-cell membership flag.
inline std::array<bool, kCellCount> start_subsample(const Map& map, int map_id, Cell goal, double fraction,
                                                    std::uint64_t seed) {
  std::vector<Cell> starts;
  for (Cell c : map.open_cells())
    if (c != goal) starts.push_back(c);
  std::array<bool, kCellCount> chosen{};
  std::size_t k = starts.size();
  if (fraction < 1.0) {
    k = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(starts.size())));
    k = std::clamp<std::size_t>(k, 1, starts.size());
    std::mt19937_64 rng(mix_seed(mix_seed(seed, static_cast<std::uint64_t>(map_id)),
                                 static_cast<std::uint64_t>(cell_index(goal))));
    std::shuffle(starts.begin(), starts.end(), rng);
  }
  for (std::size_t i = 0; i < k; ++i) chosen[static_cast<std::size_t>(cell_index(starts[i]))] = true;
  return chosen;
}

/// Samples for every listed map, every goal open in that map, and the
/// selected starts, in (map, goal, start) row-major order.
inline std::vector<Sample> build_samples(const SplitPlan& plan, std::span<const int> map_ids,
                                         std::span<const Cell> goals, StartSelection selection) {
  std::vector<Sample> out;
  for (int id : map_ids) {
    const Map& map = all_maps().at(static_cast<std::size_t>(id));
    for (Cell g : goals) {
      if (!map.is_open(g)) continue;
      const OracleLabels labels = oracle_labels(map, g);
      std::array<bool, kCellCount> chosen{};
      if (selection != StartSelection::all)
        chosen = start_subsample(map, id, g, plan.start_fraction, plan.seed);
      for (int i = 0; i < kCellCount; ++i) {
        const Cell s = cell_at(i);
        if (!map.is_open(s) || s == g) continue;
        if (selection == StartSelection::subsample && !chosen[static_cast<std::size_t>(i)]) continue;
        if (selection == StartSelection::complement && chosen[static_cast<std::size_t>(i)]) continue;
        out.push_back({static_cast<std::uint16_t>(id), static_cast<std::uint8_t>(s.row),
                       static_cast<std::uint8_t>(s.col), static_cast<std::uint8_t>(g.row),
                       static_cast<std::uint8_t>(g.col), labels.canonical[static_cast<std::size_t>(i)],
                       labels.optimal_sets[static_cast<std::size_t>(i)]});
      }
    }
  }
  return out;
}

inline std::vector<Sample> build_samples(const SplitPlan& plan, Split split) {
  return build_samples(plan, plan.maps(split), plan.goals(split), StartSelection::subsample);
}

// ---------------------------------------------------------------------------
// File format

inline constexpr std::string_view kDatasetMagic = "HUPADS1";
inline constexpr std::uint16_t kDatasetVersion = 1;
inline constexpr std::size_t kRecordSize = 8;

struct DatasetFile {
  std::uint64_t seed = 0;
  std::vector<Sample> samples;

  friend bool operator==(const DatasetFile&, const DatasetFile&) = default;
};

inline std::vector<std::uint8_t> encode_dataset(const DatasetFile& d) {
  ByteWriter records;
  for (const Sample& s : d.samples) {
    records.put<std::uint16_t>(s.map_id);
    for (std::uint8_t b : {s.s_row, s.s_col, s.g_row, s.g_col, s.label, s.optimal_mask}) records.put<std::uint8_t>(b);
  }
  ByteWriter w;
  w.put_bytes(kDatasetMagic);
  w.put<std::uint16_t>(kDatasetVersion);
  w.put<std::uint64_t>(d.samples.size());
  w.put<std::uint64_t>(d.seed);
  w.put_bytes(records.bytes());
  w.put<std::uint32_t>(crc32_of(records.bytes()));
  return std::move(w.bytes());
}

inline DatasetFile decode_dataset(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.remaining() < kDatasetMagic.size() || r.get_string(kDatasetMagic.size()) != kDatasetMagic)
    throw FormatError(FormatError::Kind::bad_magic, "not a dataset file");
  const auto version = r.get<std::uint16_t>();
  if (version != kDatasetVersion)
    throw FormatError(FormatError::Kind::bad_version, "unsupported dataset version " + std::to_string(version));
  const auto count = r.get<std::uint64_t>();
  DatasetFile d;
  d.seed = r.get<std::uint64_t>();
  if (count > r.remaining() / kRecordSize) throw FormatError(FormatError::Kind::truncated, "dataset records truncated");
  const auto records = r.get_span(count * kRecordSize);
  const auto crc = r.get<std::uint32_t>();
  if (r.remaining() != 0) throw FormatError(FormatError::Kind::corrupt, "trailing bytes after dataset");
  if (crc != crc32_of(records)) throw FormatError(FormatError::Kind::corrupt, "dataset checksum mismatch");
  ByteReader rr(records);
  d.samples.resize(count);
  for (Sample& s : d.samples) {
    s.map_id = rr.get<std::uint16_t>();
    for (std::uint8_t* b : {&s.s_row, &s.s_col, &s.g_row, &s.g_col, &s.label, &s.optimal_mask}) *b = rr.get<std::uint8_t>();
    if (s.map_id >= enumerate_door_masks().size() || s.label < 1 || s.label > 8)
      throw FormatError(FormatError::Kind::invalid, "dataset record out of range");
  }
  return d;
}

inline void save_dataset(const std::string& path, const DatasetFile& d) { write_file_bytes(path, encode_dataset(d)); }

inline DatasetFile load_dataset(const std::string& path) { return decode_dataset(read_file_bytes(path)); }

}  // namespace hupa
