#pragma once

// Experiment orchestration: run configs, the three evaluation regimes,
// result CSVs, width and sparsity sweeps, map export and rendering.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "hupa/config.hpp"
#include "hupa/metrics.hpp"
#include "hupa/render.hpp"
#include "hupa/trainer.hpp"

namespace hupa {

// ---------------------------------------------------------------------------
// Run configuration

struct RunConfig {
  std::uint64_t seed = 1;
  SplitConfig split;
  TrainConfig train;
  /// Goals evaluated per map and regime (seeded subset); 0 = all.
  int eval_goal_cap = 0;
};

/// Reads run keys; other keys are left for the caller to consume.
inline RunConfig run_config_from(const Config& c) {
  RunConfig r;
  r.seed = c.get<std::uint64_t>("seed", r.seed);
  r.train.kind = parse_model_kind(c.get<std::string>("kind", std::string(model_kind_name(r.train.kind))));
  r.train.width = c.get<int>("width", r.train.width);
  r.split.train_maps = c.get<int>("train_maps", r.split.train_maps);
  r.split.val_maps = c.get<int>("val_maps", r.split.val_maps);
  r.split.test_maps = c.get<int>("test_maps", r.split.test_maps);
  const auto fr = c.get_list<double>("goal_fractions", {r.split.goal_fractions.begin(), r.split.goal_fractions.end()});
  if (fr.size() != 3) throw ConfigError(c.source(), 0, "goal_fractions needs three values");
  std::copy(fr.begin(), fr.end(), r.split.goal_fractions.begin());
  r.split.train_goal_fraction = c.get<double>("train_goal_fraction", r.split.train_goal_fraction);
  r.split.start_fraction = c.get<double>("start_fraction", r.split.start_fraction);
  r.train.lr = c.get<double>("lr", r.train.lr);
  r.train.beta1 = c.get<double>("beta1", r.train.beta1);
  r.train.beta2 = c.get<double>("beta2", r.train.beta2);
  r.train.eps = c.get<double>("eps", r.train.eps);
  r.train.batch = c.get<int>("batch", r.train.batch);
  r.train.max_epochs = c.get<int>("max_epochs", r.train.max_epochs);
  r.train.patience = c.get<int>("patience", r.train.patience);
  r.train.steps_per_epoch = c.get<int>("steps_per_epoch", r.train.steps_per_epoch);
  r.eval_goal_cap = c.get<int>("eval_goal_cap", r.eval_goal_cap);
  r.train.seed = r.seed;
  return r;
}

inline std::map<std::string, std::string> run_config_echo(const RunConfig& r) {
  const auto& f = r.split.goal_fractions;
  return {{"split.train_maps", std::to_string(r.split.train_maps)},
          {"split.val_maps", std::to_string(r.split.val_maps)},
          {"split.test_maps", std::to_string(r.split.test_maps)},
          {"split.goal_fractions", format_double(f[0]) + "," + format_double(f[1]) + "," + format_double(f[2])},
          {"split.train_goal_fraction", format_double(r.split.train_goal_fraction)},
          {"split.start_fraction", format_double(r.split.start_fraction)},
          {"eval_goal_cap", std::to_string(r.eval_goal_cap)}};
}

// ---------------------------------------------------------------------------
// Regimes

enum class Regime { known_known, known_unknown, unknown_unknown };

inline constexpr std::array<Regime, 3> kRegimes = {Regime::known_known, Regime::known_unknown,
                                                   Regime::unknown_unknown};

inline std::string_view regime_name(Regime r) {
  switch (r) {
    case Regime::known_known: return "known-E/known-g";
    case Regime::known_unknown: return "known-E/unknown-g";
    case Regime::unknown_unknown: return "unknown-E/unknown-g";
  }
  return "?";
}

inline Regime parse_regime(std::string_view s) {
  for (Regime r : kRegimes)
    if (regime_name(r) == s) return r;
  throw std::invalid_argument("unknown regime '" + std::string(s) + "'");
}

/// Action id per cell index for one (map, goal); only open cells other than
/// the goal are read.
using ActionTable = std::array<std::uint8_t, kCellCount>;
using TablePolicy = std::function<void(int map_id, Cell goal, ActionTable& out)>;

/// Greedy argmax policy of a model; the per-map context is computed once
/// per map and reused across goals.
inline TablePolicy model_table_policy(const PolicyModel<float>& model) {
  struct State {
    int map_id = -1;
    Tensor<float> ctx;
    std::vector<float> X, logits;
    PrimaryCache<float> cache;
  };
  auto st = std::make_shared<State>();
  return [&model, st](int map_id, Cell goal, ActionTable& out) {
    const Map& map = all_maps()[static_cast<std::size_t>(map_id)];
    if (st->map_id != map_id) {
      st->ctx = model.context(map_to_image(map));
      st->map_id = map_id;
    }
    const auto& cells = map.open_cells();
    st->X.resize(cells.size() * kPrimaryInputs);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto x = primary_input<float>(cells[i], goal);
      std::copy(x.begin(), x.end(), st->X.begin() + static_cast<std::ptrdiff_t>(i * kPrimaryInputs));
    }
    st->logits.resize(cells.size() * 8);
    model.policy_forward(st->ctx.data(), st->X.data(), static_cast<int>(cells.size()), st->logits.data(), st->cache);
    out.fill(0);
    for (std::size_t i = 0; i < cells.size(); ++i)
      out[static_cast<std::size_t>(cell_index(cells[i]))] =
          static_cast<std::uint8_t>(nn::argmax(st->logits.data() + 8 * i, 8) + 1);
  };
}

inline TablePolicy oracle_table_policy() {
  return [](int map_id, Cell goal, ActionTable& out) {
    const auto labels = oracle_labels(all_maps()[static_cast<std::size_t>(map_id)], goal);
    std::copy(labels.canonical.begin(), labels.canonical.end(), out.begin());
    out[static_cast<std::size_t>(cell_index(goal))] = 1;
  };
}

struct RegimeMetrics {
  double label_acc = 0;
  double opt_acc = 0;
  double rr = 0;
  std::size_t samples = 0;
  std::size_t goals = 0;
};

/// Evaluation pairs of a regime:
///   known-E/known-g      train maps x train goals, starts held out of training
///                        (all starts when start_fraction = 1);
///   known-E/unknown-g    train maps x test goals, all starts;
///   unknown-E/unknown-g  test maps x test goals, all starts.
/// RR is averaged over every evaluated (map, goal) pair.
inline RegimeMetrics evaluate_regime(const TablePolicy& policy, const SplitPlan& plan, Regime regime,
                                     int goal_cap = 0) {
  const auto& maps = regime == Regime::unknown_unknown ? plan.test_maps : plan.train_maps;
  const auto& goals = regime == Regime::known_known ? plan.train_goals : plan.test_goals;
  const bool held_out = regime == Regime::known_known && plan.start_fraction < 1.0;
  RegimeMetrics m;
  std::size_t hit = 0, opt = 0;
  double rr_sum = 0;
  ActionTable table{};
  for (int id : maps) {
    const Map& map = all_maps()[static_cast<std::size_t>(id)];
    std::vector<Cell> open_goals;
    for (Cell g : goals)
      if (map.is_open(g)) open_goals.push_back(g);
    if (goal_cap > 0 && open_goals.size() > static_cast<std::size_t>(goal_cap)) {
      std::mt19937_64 rng(mix_seed(mix_seed(plan.seed, 0x6576616c), static_cast<std::uint64_t>(id)));  // "eval"
      std::shuffle(open_goals.begin(), open_goals.end(), rng);
      open_goals.resize(static_cast<std::size_t>(goal_cap));
      std::sort(open_goals.begin(), open_goals.end());
    }
    for (Cell g : open_goals) {
      policy(id, g, table);
      const auto labels = oracle_labels(map, g);
      std::array<bool, kCellCount> trained{};
      if (held_out) trained = start_subsample(map, id, g, plan.start_fraction, plan.seed);
      for (Cell s : map.open_cells()) {
        const auto i = static_cast<std::size_t>(cell_index(s));
        if (s == g || trained[i]) continue;
        const int a = table[i];
        if (a < 1 || a > kActionCount) throw std::invalid_argument("policy produced an invalid action id");
        hit += a == labels.canonical[i];
        opt += contains(labels.optimal_sets[i], Action(a));
        ++m.samples;
      }
      const auto graph = policy_graph([&](Cell s) { return static_cast<int>(table[static_cast<std::size_t>(cell_index(s))]); }, map, g);
      rr_sum += static_cast<double>(reachable_set(graph).count()) / static_cast<double>(map.open_count());
      ++m.goals;
    }
  }
  if (m.goals == 0) throw std::invalid_argument("regime " + std::string(regime_name(regime)) + " has no goals");
  if (m.samples > 0) {
    m.label_acc = static_cast<double>(hit) / static_cast<double>(m.samples);
    m.opt_acc = static_cast<double>(opt) / static_cast<double>(m.samples);
  }
  m.rr = rr_sum / static_cast<double>(m.goals);
  return m;
}

// ---------------------------------------------------------------------------
// Result rows and CSV

struct ResultRow {
  ModelKind kind = ModelKind::hupa;
  int width = 0;
  std::uint64_t seed = 0;
  Regime regime = Regime::known_known;
  double label_acc = 0;
  double opt_acc = 0;
  double rr = 0;
  std::size_t params = 0;
  double seconds = 0;
  // Sparsity sweep columns.
  std::string axis;
  int train_maps = 0;
  double goal_pct = 0;

  friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

inline constexpr std::string_view kResultHeader = "kind,width,seed,regime,label_acc,opt_acc,rr,params,seconds";
inline constexpr std::string_view kSparsityHeader =
    "kind,width,seed,regime,label_acc,opt_acc,rr,params,seconds,axis,train_maps,goal_pct";

inline std::string csv_line(const ResultRow& r, bool sparsity) {
  std::ostringstream os;
  os << model_kind_name(r.kind) << ',' << r.width << ',' << r.seed << ',' << regime_name(r.regime) << ','
     << format_double(r.label_acc) << ',' << format_double(r.opt_acc) << ',' << format_double(r.rr) << ','
     << r.params << ',' << format_double(r.seconds);
  if (sparsity) os << ',' << r.axis << ',' << r.train_maps << ',' << format_double(r.goal_pct);
  return os.str();
}

inline ResultRow parse_csv_line(std::string_view line, bool sparsity) {
  std::vector<std::string> f;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    f.emplace_back(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  if (f.size() != (sparsity ? 12u : 9u)) throw std::invalid_argument("malformed result row: " + std::string(line));
  ResultRow r;
  r.kind = parse_model_kind(f[0]);
  r.width = std::stoi(f[1]);
  r.seed = std::stoull(f[2]);
  r.regime = parse_regime(f[3]);
  r.label_acc = std::stod(f[4]);
  r.opt_acc = std::stod(f[5]);
  r.rr = std::stod(f[6]);
  r.params = std::stoull(f[7]);
  r.seconds = std::stod(f[8]);
  if (sparsity) {
    r.axis = f[9];
    r.train_maps = std::stoi(f[10]);
    r.goal_pct = std::stod(f[11]);
  }
  return r;
}

/// Rows of an existing result CSV (empty if the file does not exist).
inline std::vector<ResultRow> read_results(const std::string& path, bool sparsity = false) {
  std::vector<ResultRow> rows;
  std::ifstream in(path);
  if (!in) return rows;
  std::string line;
  if (!std::getline(in, line)) return rows;
  if (line != (sparsity ? kSparsityHeader : kResultHeader))
    throw std::runtime_error(path + ": unexpected CSV header '" + line + "'");
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(parse_csv_line(line, sparsity));
  return rows;
}

/// Appends rows, writing the header when the file is new.
inline void append_results(const std::string& path, std::span<const ResultRow> rows, bool sparsity = false) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  if (!fresh) read_results(path, sparsity);  // validates the header
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open " + path);
  if (fresh) out << (sparsity ? kSparsityHeader : kResultHeader) << '\n';
  for (const auto& r : rows) out << csv_line(r, sparsity) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

/// Median of a metric over seeds, per (kind, width, regime).
inline std::map<std::tuple<ModelKind, int, Regime>, double> median_by_cell(std::span<const ResultRow> rows,
                                                                         double ResultRow::*metric) {
  std::map<std::tuple<ModelKind, int, Regime>, std::vector<double>> values;
  for (const auto& r : rows) values[{r.kind, r.width, r.regime}].push_back(r.*metric);
  std::map<std::tuple<ModelKind, int, Regime>, double> out;
  for (auto& [key, v] : values) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    out[key] = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Runs

struct RunOutput {
  std::vector<ResultRow> rows;
  TrainResult result;
  SplitPlan plan;
};

inline std::size_t model_total_params(ModelKind kind, int width) {
  return kind == ModelKind::hupa ? hupa_total_params(width) : embedding_total_params(width, match_embedding_dim(width));
}

/// Trains one model and evaluates it in the three regimes.
inline RunOutput run_experiment(const RunConfig& rc, const TrainHooks& hooks = {}) {
  RunOutput out;
  out.plan = make_splits(rc.seed, rc.split);
  const auto train_set = build_samples(out.plan, Split::train);
  const auto val_set = build_samples(out.plan, Split::val);
  TrainConfig tc = rc.train;
  tc.seed = rc.seed;
  out.result = train(tc, train_set, val_set, hooks);
  const TablePolicy policy = model_table_policy(out.result.model);
  for (Regime regime : kRegimes) {
    const RegimeMetrics m = evaluate_regime(policy, out.plan, regime, rc.eval_goal_cap);
    ResultRow row;
    row.kind = tc.kind;
    row.width = tc.width;
    row.seed = rc.seed;
    row.regime = regime;
    row.label_acc = m.label_acc;
    row.opt_acc = m.opt_acc;
    row.rr = m.rr;
    row.params = out.result.model.parameter_count();
    row.seconds = out.result.seconds;
    out.rows.push_back(row);
  }
  return out;
}

inline std::string run_stem(const RunConfig& rc) {
  return std::string(model_kind_name(rc.train.kind)) + "_w" + std::to_string(rc.train.width) + "_s" +
         std::to_string(rc.seed);
}

/// run_experiment plus checkpoint and sidecar metadata under `dir`.
inline std::vector<ResultRow> run_and_save(const RunConfig& rc, const std::string& dir, const std::string& stem,
                                           const TrainHooks& hooks = {}) {
  std::filesystem::create_directories(dir);
  RunOutput out = run_experiment(rc, hooks);
  const std::string base = (std::filesystem::path(dir) / stem).string();
  nn::save_checkpoint(base + ".ckpt", out.result.model.to_named_tensors());
  auto extra = run_config_echo(rc);
  extra["train_seconds"] = format_double(out.result.seconds);
  extra["params"] = std::to_string(out.result.model.parameter_count());
  std::ofstream meta(base + ".meta");
  meta << training_metadata(rc.train, out.result.history, extra);
  return out.rows;
}

/// Trains, evaluates, saves the model and appends 3 rows to dir/results.csv.
inline std::vector<ResultRow> cmd_run(const RunConfig& rc, const std::string& dir, const TrainHooks& hooks = {}) {
  auto rows = run_and_save(rc, dir, run_stem(rc), hooks);
  append_results((std::filesystem::path(dir) / "results.csv").string(), rows);
  return rows;
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepConfig {
  RunConfig base;
  std::vector<ModelKind> kinds = {ModelKind::hupa, ModelKind::embedding};
  std::vector<int> widths = {kWidths.begin(), kWidths.end()};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::vector<int> map_counts = {5, 10, 20, 35, 50};
  std::vector<double> goal_pcts = {5, 10, 20, 40};
  int sparsity_width = 128;
};

inline SweepConfig sweep_config_from(const Config& c) {
  SweepConfig s;
  s.base = run_config_from(c);
  std::vector<std::string> kinds;
  for (ModelKind k : s.kinds) kinds.emplace_back(model_kind_name(k));
  s.kinds.clear();
  for (const auto& k : c.get_list<std::string>("kinds", kinds)) s.kinds.push_back(parse_model_kind(k));
  s.widths = c.get_list<int>("widths", s.widths);
  for (int w : s.widths)
    if (std::find(kWidths.begin(), kWidths.end(), w) == kWidths.end())
      throw ConfigError(c.source(), 0, "width " + std::to_string(w) + " is not one of 16,32,64,128,256");
  s.seeds = c.get_list<std::uint64_t>("seeds", s.seeds);
  s.map_counts = c.get_list<int>("sparsity_maps", s.map_counts);
  s.goal_pcts = c.get_list<double>("sparsity_goal_pcts", s.goal_pcts);
  s.sparsity_width = c.get<int>("sparsity_width", s.sparsity_width);
  return s;
}

using RunFn = std::function<std::vector<ResultRow>(const RunConfig&)>;

/// Keys with all three regimes present; throws on a partially written key.
template <class Key, class KeyOf>
std::set<Key> completed_keys(std::span<const ResultRow> rows, KeyOf key_of) {
  std::map<Key, std::set<Regime>> seen;
  for (const auto& r : rows) seen[key_of(r)].insert(r.regime);
  std::set<Key> done;
  for (const auto& [k, regs] : seen) {
    if (regs.size() != kRegimes.size()) throw std::runtime_error("result CSV holds a partial run; remove it to resume");
    done.insert(k);
  }
  return done;
}

/// kind x width x seed; returns the number of rows appended.
inline std::size_t cmd_sweep_width(const SweepConfig& sc, const std::string& csv, const RunFn& run) {
  using Key = std::tuple<ModelKind, int, std::uint64_t>;
  const auto existing = read_results(csv);
  const auto done = completed_keys<Key>(existing, [](const ResultRow& r) { return Key{r.kind, r.width, r.seed}; });
  std::size_t added = 0;
  for (std::uint64_t seed : sc.seeds)
    for (int width : sc.widths)
      for (ModelKind kind : sc.kinds) {
        if (done.contains(Key{kind, width, seed})) continue;
        RunConfig rc = sc.base;
        rc.seed = seed;
        rc.train.seed = seed;
        rc.train.kind = kind;
        rc.train.width = width;
        auto rows = run(rc);
        append_results(csv, rows);
        added += rows.size();
      }
  return added;
}

/// Two one-dimensional axes at the sparsity width: train map count (goal
/// percentage fixed at the last grid value) and goal percentage (map count
/// fixed at the last grid value). Identical cells shared by the two axes are
/// trained once.
inline std::size_t cmd_sweep_sparsity(const SweepConfig& sc, const std::string& csv, const RunFn& run) {
  using Key = std::tuple<ModelKind, std::uint64_t, std::string, int, double>;
  using Cell4 = std::tuple<ModelKind, std::uint64_t, int, double>;
  const auto existing = read_results(csv, true);
  const auto done = completed_keys<Key>(
      existing, [](const ResultRow& r) { return Key{r.kind, r.seed, r.axis, r.train_maps, r.goal_pct}; });
  std::map<Cell4, std::vector<ResultRow>> cache;
  for (const auto& r : existing) cache[{r.kind, r.seed, r.train_maps, r.goal_pct}].push_back(r);

  struct Point {
    std::string axis;
    int maps;
    double pct;
  };
  std::vector<Point> points;
  const double full_pct = sc.goal_pcts.empty() ? 40.0 : sc.goal_pcts.back();
  const int full_maps = sc.map_counts.empty() ? sc.base.split.train_maps : sc.map_counts.back();
  for (int m : sc.map_counts) points.push_back({"maps", m, full_pct});
  for (double p : sc.goal_pcts) points.push_back({"goals", full_maps, p});

  std::size_t added = 0;
  for (std::uint64_t seed : sc.seeds)
    for (const auto& pt : points)
      for (ModelKind kind : sc.kinds) {
        if (done.contains(Key{kind, seed, pt.axis, pt.maps, pt.pct})) continue;
        std::vector<ResultRow> rows;
        if (auto it = cache.find({kind, seed, pt.maps, pt.pct}); it != cache.end() && it->second.size() >= 3) {
          rows.assign(it->second.begin(), it->second.begin() + 3);
        } else {
          RunConfig rc = sc.base;
          rc.seed = seed;
          rc.train.seed = seed;
          rc.train.kind = kind;
          rc.train.width = sc.sparsity_width;
          rc.split.train_maps = pt.maps;
          rc.split.train_goal_fraction = pt.pct / 100.0;
          rows = run(rc);
          cache[{kind, seed, pt.maps, pt.pct}] = rows;
        }
        for (auto& r : rows) {
          r.axis = pt.axis;
          r.train_maps = pt.maps;
          r.goal_pct = pt.pct;
        }
        append_results(csv, rows, true);
        added += rows.size();
      }
  return added;
}

inline std::string sweep_metadata(const SweepConfig& sc, std::string_view kind) {
  std::ostringstream os;
  auto list = [&](const auto& v) {
    std::ostringstream l;
    for (std::size_t i = 0; i < v.size(); ++i) l << (i ? "," : "") << v[i];
    return l.str();
  };
  os << "sweep=" << kind << "\n";
  std::vector<std::string> kinds;
  for (ModelKind k : sc.kinds) kinds.emplace_back(model_kind_name(k));
  os << "kinds=" << list(kinds) << "\nseeds=" << list(sc.seeds) << "\naggregate=median over seeds\n";
  if (kind == "width") {
    os << "widths=" << list(sc.widths) << "\n";
  } else {
    os << "sparsity_width=" << sc.sparsity_width << "\nsparsity_maps=" << list(sc.map_counts)
       << "\nsparsity_goal_pcts=" << list(sc.goal_pcts) << "\n";
  }
  const TrainConfig& t = sc.base.train;
  os << "lr=" << format_double(t.lr) << "\nbatch=" << t.batch << "\nmax_epochs=" << t.max_epochs
     << "\npatience=" << t.patience << "\nsteps_per_epoch=" << t.steps_per_epoch << "\n";
  for (const auto& [k, v] : run_config_echo(sc.base)) os << k << "=" << v << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Maps and rendering

/// map_NNN.txt for every mask plus index.csv (map_id,door_a,door_b,door_c).
inline void cmd_maps(const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream index;
  index << "map_id,door_a,door_b,door_c\n";
  const auto& masks = enumerate_door_masks();
  for (std::size_t id = 0; id < masks.size(); ++id) {
    char name[32];
    std::snprintf(name, sizeof name, "map_%03zu.txt", id);
    const std::string text = map_to_text(all_maps()[id]);
    write_file_bytes((std::filesystem::path(dir) / name).string(),
                     std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    index << id;
    for (int d : masks[id].doors()) index << ',' << d;
    index << '\n';
  }
  const std::string idx = index.str();
  write_file_bytes((std::filesystem::path(dir) / "index.csv").string(),
                   std::span(reinterpret_cast<const std::uint8_t*>(idx.data()), idx.size()));
}

struct RenderOutput {
  std::string reachability_path;
  std::string arrows_path;
  std::size_t reachable = 0;
  std::size_t unreachable = 0;
};

/// Writes `<out>` (one pixel per cell) and `<out stem>_arrows.ppm`.
inline RenderOutput cmd_render(const TablePolicy& policy, int map_id, Cell goal, const std::string& out) {
  if (map_id < 0 || map_id >= static_cast<int>(all_maps().size()))
    throw std::invalid_argument("map id " + std::to_string(map_id) + " out of range");
  const Map& map = all_maps()[static_cast<std::size_t>(map_id)];
  if (!in_bounds(goal) || !map.is_open(goal)) throw std::invalid_argument("render: goal is not an open cell");
  ActionTable table{};
  policy(map_id, goal, table);
  const StatePolicy sp = [&](Cell s) { return static_cast<int>(table[static_cast<std::size_t>(cell_index(s))]); };
  const CellSet reach = reachable_set(policy_graph(sp, map, goal));
  RenderOutput r;
  r.reachability_path = out;
  const std::filesystem::path p(out);
  r.arrows_path = (p.parent_path() / (p.stem().string() + "_arrows.ppm")).string();
  if (!p.parent_path().empty()) std::filesystem::create_directories(p.parent_path());
  save_ppm(r.reachability_path, render_reachability(map, reach, goal));
  save_ppm(r.arrows_path, render_policy_arrows(map, sp, reach, goal));
  r.reachable = reach.count();
  r.unreachable = static_cast<std::size_t>(map.open_count()) - r.reachable;
  return r;
}

}  // namespace hupa
