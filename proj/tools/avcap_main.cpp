// Copyright 2026 The avcap Authors
// SPDX-License-Identifier: Apache-2.0
//
// avcap: command-line driver for data generation, training, the mixing-weight
// sweep, evaluation and result aggregation.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "avcap/errors.h"
#include "avcap/harness.h"

namespace fs = std::filesystem;
using namespace avcap;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool with_lambda) {
  cmd->add_option("--config", c.config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "run a single seed (default: every configured seed)");
  cmd->add_option("--out", c.out, "override the output directory");
  if (with_lambda) cmd->add_option("--lambda", c.lambda, "acoustic mixing weight in [0, 1]")->check(CLI::Range(0.0, 1.0));
}

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = load_experiment_config(c.config_path);
  if (!c.out.empty()) cfg.out_dir = c.out;
  return cfg;
}

std::vector<std::uint64_t> seeds_of(const Common& c, const ExperimentConfig& cfg) {
  return c.seed ? std::vector<std::uint64_t>{*c.seed} : cfg.seeds();
}

std::string in_run(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& name) {
  return (fs::path(cfg.run_dir(seed)) / name).string();
}

void write_eval(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& stem, const EvalResult& r,
                const EvalOptions& options) {
  write_text_file(in_run(cfg, seed, stem + ".json"), eval_to_json(r, options).dump(2) + "\n");
  write_text_file(in_run(cfg, seed, stem + ".csv"), report_csv_header() + "\n" + report_csv_row(r.report) + "\n");
  write_candidates(in_run(cfg, seed, stem + "_candidates.jsonl"), r.candidates);
}

int run_gen_data(const Common& c) {
  ExperimentConfig cfg = load_experiment_config(c.config_path);
  if (c.seed) cfg.task.seed = *c.seed;
  if (!c.out.empty()) cfg.data_dir = c.out;
  const Manifest m = cmd_gen_data(cfg);
  std::cout << "wrote " << m.records.size() << " clips to " << cfg.data_dir << "\n";
  return 0;
}

int run_train(const Common& c) {
  const ExperimentConfig cfg = load(c);
  for (auto seed : seeds_of(c, cfg)) {
    cmd_train(cfg, seed);
    std::cout << "trained seed " << seed << " into " << cfg.run_dir(seed) << "\n";
  }
  return 0;
}

int run_sweep(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const Manifest manifest = read_manifest(cfg.manifest_path());
  for (auto seed : seeds_of(c, cfg)) {
    const TrainedModel trained = load_trained(cfg, seed);
    const SplitContext val = prepare_split(trained.model, manifest, Split::kVal);
    const SweepResult sweep =
        cmd_sweep(trained, val, cfg.grid, cfg.selection_metric, cfg.decode, eval_options(cfg, Split::kVal));
    write_text_file(in_run(cfg, seed, "sweep.json"), sweep_to_json(sweep, cfg.selection_metric).dump(2) + "\n");
    write_text_file(in_run(cfg, seed, "sweep.csv"), sweep_csv(sweep));
    for (const auto& w : sweep.warnings) std::cerr << "warning: seed " << seed << ": " << w << "\n";
    std::cout << "seed " << seed << ": chose lambda " << sweep.chosen_lambda << "\n";
  }
  return 0;
}

double chosen_lambda(const ExperimentConfig& cfg, std::uint64_t seed) {
  const auto path = in_run(cfg, seed, "sweep.json");
  if (!fs::exists(path)) throw ConfigError("no --lambda given and no sweep result at '" + path + "'");
  return nlohmann::json::parse(read_text_file(path)).at("chosen_lambda").get<double>();
}

int run_eval(const Common& c, bool vision_only) {
  const ExperimentConfig cfg = load(c);
  const Manifest manifest = read_manifest(cfg.manifest_path());
  const EvalOptions options = eval_options(cfg, Split::kEval);
  for (auto seed : seeds_of(c, cfg)) {
    const TrainedModel trained = load_trained(cfg, seed);
    const SplitContext split = prepare_split(trained.model, manifest, Split::kEval);
    if (vision_only) {
      write_eval(cfg, seed, "vision_only", cmd_vision_only(trained, split, cfg.decode, options), options);
      std::cout << "seed " << seed << ": vision-only report written\n";
    } else {
      const double lambda = c.lambda ? *c.lambda : chosen_lambda(cfg, seed);
      const EvalResult r = cmd_eval(trained, split, lambda, cfg.decode, options);
      write_eval(cfg, seed, c.lambda ? "eval_lambda_" + std::to_string(*c.lambda).substr(0, 4) : "eval", r,
                 options);
      std::cout << "seed " << seed << ": lambda " << lambda << ", CIDEr-D " << r.report.cider_d << "\n";
    }
  }
  return 0;
}

int run_curve(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const Manifest manifest = read_manifest(cfg.manifest_path());
  const EvalOptions options = eval_options(cfg, Split::kEval);
  std::vector<std::vector<double>> per_seed;
  for (auto seed : seeds_of(c, cfg)) {
    const TrainedModel trained = load_trained(cfg, seed);
    const SplitContext split = prepare_split(trained.model, manifest, Split::kEval);
    std::vector<double> row;
    for (double lambda : cfg.grid) row.push_back(cmd_eval(trained, split, lambda, cfg.decode, options).report.cider_d);
    per_seed.push_back(std::move(row));
  }
  const auto path = (fs::path(cfg.out_dir) / "curve.csv").string();
  write_text_file(path, curve_csv(aggregate_curve(cfg.grid, per_seed)));
  std::cout << "wrote " << path << "\n";
  return 0;
}

int run_table(const std::vector<std::string>& config_paths, const std::string& out) {
  std::vector<TableInput> inputs;
  std::string out_dir = out;
  for (const auto& path : config_paths) {
    const ExperimentConfig cfg = load_experiment_config(path);
    if (out_dir.empty()) out_dir = cfg.out_dir;
    const std::string label = fs::path(path).stem().string();
    for (const auto& [stem, suffix] : {std::pair{"eval", ""}, std::pair{"vision_only", " (vision-only)"}}) {
      TableInput in{label + suffix, {}};
      for (auto seed : cfg.seeds()) {
        const auto file = (fs::path(cfg.run_dir(seed)) / (std::string(stem) + ".json")).string();
        if (fs::exists(file)) in.reports.push_back(nlohmann::json::parse(read_text_file(file)).at("report").at("corpus"));
      }
      if (!in.reports.empty()) inputs.push_back(std::move(in));
    }
  }
  if (inputs.empty()) throw ConfigError("table: no eval or vision-only reports found");
  const auto rows = aggregate_table(inputs);
  write_text_file((fs::path(out_dir) / "table.md").string(), table_markdown(rows));
  write_text_file((fs::path(out_dir) / "table.csv").string(), table_csv(rows));
  std::cout << table_markdown(rows);
  return 0;
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const FormatError*>(&e)) return "format";
  if (dynamic_cast<const IoError*>(&e)) return "io";
  if (dynamic_cast<const DimensionError*>(&e)) return "dimension";
  if (dynamic_cast<const IndexError*>(&e)) return "index";
  if (dynamic_cast<const ContractError*>(&e)) return "contract";
  if (dynamic_cast<const TrainingError*>(&e)) return "training";
  return "internal";
}

int fail(const std::string& kind, const std::string& message, int code) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"avcap: multi-encoder audio captioning experiments"};
  app.require_subcommand(1);
  Common gen, train, sweep, eval, vision, curve;
  add_common(app.add_subcommand("gen-data", "generate the synthetic dataset"), gen, false);
  add_common(app.add_subcommand("train", "train one or all seeds"), train, false);
  add_common(app.add_subcommand("sweep", "select the mixing weight on validation data"), sweep, false);
  add_common(app.add_subcommand("eval", "decode and score the eval split"), eval, true);
  add_common(app.add_subcommand("vision-only", "evaluate with the acoustic weight forced to 0"), vision, false);
  add_common(app.add_subcommand("curve", "CIDEr across the grid, mean and sd over seeds"), curve, false);
  auto* table = app.add_subcommand("table", "aggregate eval reports into Markdown and CSV tables");
  std::vector<std::string> table_configs;
  std::string table_out;
  table->add_option("--config", table_configs, "experiment configs, one table row each")
      ->required()
      ->check(CLI::ExistingFile);
  table->add_option("--out", table_out, "output directory (default: first config's out_dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (app.got_subcommand("gen-data")) return run_gen_data(gen);
    if (app.got_subcommand("train")) return run_train(train);
    if (app.got_subcommand("sweep")) return run_sweep(sweep);
    if (app.got_subcommand("eval")) return run_eval(eval, false);
    if (app.got_subcommand("vision-only")) return run_eval(vision, true);
    if (app.got_subcommand("curve")) return run_curve(curve);
    if (app.got_subcommand("table")) return run_table(table_configs, table_out);
  } catch (const std::exception& e) {
    return fail(error_kind(e), e.what(), 1);
  }
  return fail("usage", "no subcommand", 2);
}
