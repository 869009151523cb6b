// hupa: command-line front end for map export, dataset builds, training,
// evaluation, sweeps, rendering and gradient verification.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>

#include "hupa/harness.hpp"
#include "hupa/verify.hpp"

namespace fs = std::filesystem;
using namespace hupa;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool deterministic = true;
};

void add_common(CLI::App* cmd, Common& c, bool with_config, const std::string& out_help) {
  if (with_config) cmd->add_option("--config", c.config, "key=value config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "overrides the config seed");
  cmd->add_option("--out", c.out, out_help)->required();
  cmd->add_flag("--deterministic", c.deterministic,
                "single-threaded fixed-order execution (the default and only mode)");
}

Config load_config(const Common& c) {
  Config cfg = c.config.empty() ? Config::parse("", "<defaults>") : Config::load(c.config);
  if (c.seed) cfg.set("seed", std::to_string(*c.seed));
  return cfg;
}

Cell parse_cell(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw std::invalid_argument("expected ROW,COL but got '" + s + "'");
  return {std::stoi(s.substr(0, comma)), std::stoi(s.substr(comma + 1))};
}

void print_rows(const std::vector<ResultRow>& rows) {
  std::cout << kResultHeader << "\n";
  for (const auto& r : rows) std::cout << csv_line(r, false) << "\n";
}

TrainHooks progress_hooks() {
  TrainHooks h;
  h.on_epoch = [](const EpochRecord& e) {
    std::cerr << "epoch " << e.epoch << " loss " << e.train_loss << " train_acc " << e.train_acc << " val_acc "
              << e.val_acc << "\n";
  };
  return h;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hypernetwork policy generation laboratory"};
  app.require_subcommand(1);

  Common maps_opt, data_opt, train_opt, eval_opt, run_opt, sw_opt, ss_opt, render_opt;

  auto* maps = app.add_subcommand("maps", "write all 164 maps and an index CSV");
  add_common(maps, maps_opt, false, "output directory");

  auto* dataset = app.add_subcommand("dataset", "build one split and save it as a dataset file");
  add_common(dataset, data_opt, true, "output file");
  std::string split_name_arg = "train";
  dataset->add_option("--split", split_name_arg, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));

  auto* train_cmd = app.add_subcommand("train", "train one model and save checkpoint + metadata");
  add_common(train_cmd, train_opt, true, "output directory");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint in the three regimes");
  add_common(eval, eval_opt, true, "result CSV (appended)");
  std::string eval_ckpt;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);

  auto* run = app.add_subcommand("run", "train, evaluate and append three rows to OUT/results.csv");
  add_common(run, run_opt, true, "output directory");

  auto* sweep_width = app.add_subcommand("sweep-width", "kind x width x seed sweep (resumable)");
  add_common(sweep_width, sw_opt, true, "output directory");

  auto* sweep_sparsity = app.add_subcommand("sweep-sparsity", "train map / goal sparsity sweep (resumable)");
  add_common(sweep_sparsity, ss_opt, true, "output directory");

  auto* render = app.add_subcommand("render", "render reachability and action maps as PPM");
  add_common(render, render_opt, false, "output .ppm path");
  std::string render_ckpt, goal_arg;
  int map_id = 0;
  bool use_oracle = false;
  render->add_option("--checkpoint", render_ckpt, "checkpoint file")->check(CLI::ExistingFile);
  render->add_flag("--oracle", use_oracle, "render the oracle policy instead of a checkpoint");
  render->add_option("--map-id", map_id, "map index 0..163")->required();
  render->add_option("--goal", goal_arg, "goal as ROW,COL")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  bool corrupt = false;
  GradCheckSuiteOptions gc_opt;
  gradcheck->add_flag("--corrupt-conv", corrupt, "negative control: corrupt conv gradients");
  gradcheck->add_option("--width", gc_opt.width, "primary width of the full-model checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*maps) {
      cmd_maps(maps_opt.out);
      std::cout << "wrote " << enumerate_door_masks().size() << " maps to " << maps_opt.out << "\n";
    } else if (*dataset) {
      const Config cfg = load_config(data_opt);
      const RunConfig rc = run_config_from(cfg);
      cfg.reject_unknown();
      const SplitPlan plan = make_splits(rc.seed, rc.split);
      const DatasetFile d{rc.seed, build_samples(plan, parse_split(split_name_arg))};
      save_dataset(data_opt.out, d);
      std::cout << "wrote " << d.samples.size() << " samples to " << data_opt.out << "\n";
    } else if (*train_cmd) {
      const Config cfg = load_config(train_opt);
      const RunConfig rc = run_config_from(cfg);
      cfg.reject_unknown();
      const SplitPlan plan = make_splits(rc.seed, rc.split);
      const auto tr = build_samples(plan, Split::train);
      const auto va = build_samples(plan, Split::val);
      const TrainResult res = train(rc.train, tr, va, progress_hooks());
      fs::create_directories(train_opt.out);
      const std::string base = (fs::path(train_opt.out) / run_stem(rc)).string();
      nn::save_checkpoint(base + ".ckpt", res.model.to_named_tensors());
      auto extra = run_config_echo(rc);
      extra["train_seconds"] = format_double(res.seconds);
      std::ofstream(base + ".meta") << training_metadata(rc.train, res.history, extra);
      std::cout << "best epoch " << res.history.best_epoch << " val_acc " << res.history.best_val_acc << " -> "
                << base << ".ckpt\n";
    } else if (*eval) {
      const Config cfg = load_config(eval_opt);
      const RunConfig rc = run_config_from(cfg);
      cfg.reject_unknown();
      const auto model = PolicyModel<float>::from_named_tensors(nn::load_checkpoint(eval_ckpt));
      const SplitPlan plan = make_splits(rc.seed, rc.split);
      const TablePolicy policy = model_table_policy(model);
      std::vector<ResultRow> rows;
      for (Regime regime : kRegimes) {
        const RegimeMetrics m = evaluate_regime(policy, plan, regime, rc.eval_goal_cap);
        rows.push_back({model.kind(), model.width(), rc.seed, regime, m.label_acc, m.opt_acc, m.rr,
                        model.parameter_count(), 0.0});
      }
      append_results(eval_opt.out, rows);
      print_rows(rows);
    } else if (*run) {
      const Config cfg = load_config(run_opt);
      const RunConfig rc = run_config_from(cfg);
      cfg.reject_unknown();
      print_rows(cmd_run(rc, run_opt.out, progress_hooks()));
    } else if (*sweep_width || *sweep_sparsity) {
      const bool width = sweep_width->parsed();
      const Common& opt = width ? sw_opt : ss_opt;
      const Config cfg = load_config(opt);
      const SweepConfig sc = sweep_config_from(cfg);
      cfg.reject_unknown();
      fs::create_directories(opt.out);
      const fs::path dir(opt.out);
      const std::string csv = (dir / (width ? "sweep_width.csv" : "sweep_sparsity.csv")).string();
      std::ofstream((dir / (width ? "sweep_width.meta" : "sweep_sparsity.meta")).string())
          << sweep_metadata(sc, width ? "width" : "sparsity");
      const RunFn runner = [&](const RunConfig& rc) {
        std::string stem = run_stem(rc);
        if (!width)
          stem += "_m" + std::to_string(rc.split.train_maps) + "_g" +
                  std::to_string(static_cast<int>(std::lround(rc.split.train_goal_fraction * 100)));
        std::cerr << "run " << stem << "\n";
        return run_and_save(rc, (dir / "runs").string(), stem);
      };
      const std::size_t added = width ? cmd_sweep_width(sc, csv, runner) : cmd_sweep_sparsity(sc, csv, runner);
      std::cout << "appended " << added << " rows to " << csv << "\n";
    } else if (*render) {
      if (use_oracle == !render_ckpt.empty())
        throw std::invalid_argument("render needs exactly one of --checkpoint, --oracle");
      std::optional<PolicyModel<float>> model;
      TablePolicy policy = oracle_table_policy();
      if (!use_oracle) {
        model = PolicyModel<float>::from_named_tensors(nn::load_checkpoint(render_ckpt));
        policy = model_table_policy(*model);
      }
      const RenderOutput r = cmd_render(policy, map_id, parse_cell(goal_arg), render_opt.out);
      std::cout << r.reachability_path << " " << r.arrows_path << " reachable=" << r.reachable
                << " unreachable=" << r.unreachable << "\n";
    } else if (*gradcheck) {
      gc_opt.corrupt_conv_backward = corrupt;
      const GradCheckReport report = run_gradcheck_suite(gc_opt);
      std::cout << format_report(report);
      return report.passed() ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
