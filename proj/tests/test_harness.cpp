// Copyright 2026 The avcap Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "avcap/errors.h"
#include "avcap/harness.h"
#include "fixtures.h"

using namespace avcap;
namespace fs = std::filesystem;

namespace {

// Writes a tiny experiment under `dir` with paths relative to the config file.
std::string write_tiny_config(const std::string& dir) {
  ExperimentConfig c;
  c.data_dir = "data";
  c.out_dir = "runs";
  c.task.n_train = 16;
  c.task.n_val = 4;
  c.task.n_eval = 4;
  c.task.frames = 8;
  c.task.d_audio = 6;
  c.task.d_secondary = 5;
  c.task.max_events = 2;
  c.model = avcap::testing::tiny_config();
  c.train.epochs = 2;
  c.train.warmup_epochs = 1;
  c.cbow.epochs = 2;
  c.decode.max_depth = 8;
  c.grid = {0.0, 0.5, 1.0};
  c.n_seeds = 1;
  nlohmann::json j = c;
  write_text_file(dir + "/experiment.json", j.dump(2));
  return dir + "/experiment.json";
}

// One trained tiny experiment shared by the end-to-end cases.
struct Tiny {
  ExperimentConfig config;
  TrainedModel trained;
  Manifest manifest;
};

Tiny& tiny() {
  static Tiny t = [] {
    const auto dir = avcap::testing::scratch_dir("harness");
    ExperimentConfig c = load_experiment_config(write_tiny_config(dir));
    const Manifest m = cmd_gen_data(c);
    TrainedModel trained = cmd_train(c, 1);
    return Tiny{c, std::move(trained), m};
  }();
  return t;
}

std::string dump(const EvalResult& r, const EvalOptions& o) { return eval_to_json(r, o).dump(); }

}  // namespace

TEST_CASE("experiment config: relative paths anchor at the config file, grid is validated") {
  const auto dir = avcap::testing::scratch_dir("harness_cfg");
  const ExperimentConfig c = load_experiment_config(write_tiny_config(dir));
  CHECK(c.data_dir == (fs::path(dir) / "data").string());
  CHECK(c.run_dir(3) == (fs::path(dir) / "runs" / "seed_3").string());
  CHECK(default_grid().size() == 21);
  CHECK(default_grid().back() == doctest::Approx(1.0));

  ExperimentConfig bad = c;
  bad.grid = {0.5, 0.5};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.grid = {0.0, 1.5};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.grid = {};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.selection_metric = "accuracy";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(load_experiment_config(dir + "/absent.json"), IoError);
}

TEST_CASE("eval options load the synonym table and SPICE scores named in the config") {
  const auto dir = avcap::testing::scratch_dir("harness_opts");
  ExperimentConfig c = load_experiment_config(write_tiny_config(dir));
  CHECK(eval_options(c, Split::kEval).meteor.synonyms == nullptr);

  write_text_file(dir + "/synonyms.txt", "puppy dog\n");
  write_text_file(dir + "/spice.jsonl", "{\"clip_id\":\"eval_0000\",\"spice\":0.25}\n");
  c.synonyms_path = dir + "/synonyms.txt";
  c.spice_path = dir + "/spice.jsonl";
  const EvalOptions copy = [&] { return eval_options(c, Split::kEval); }();
  REQUIRE(copy.meteor.synonyms != nullptr);
  CHECK(copy.meteor.synonyms->synonyms("puppy", "dog"));
  CHECK(meteor({"a", "puppy"}, {{"a", "dog"}}, copy.meteor) > meteor({"a", "puppy"}, {{"a", "dog"}}));
  CHECK(copy.spice.at("eval_0000") == 0.25);
  // SPICE applies to the eval split only.
  CHECK(eval_options(c, Split::kVal).spice.empty());
}

TEST_CASE("table aggregation: hand-computed mean and sample sd in percent") {
  const std::vector<TableInput> in{
      {"fusion", {{{"bleu4", 0.10}, {"meteor", 0.20}}, {{"bleu4", 0.14}, {"meteor", 0.22}}, {{"bleu4", 0.12}, {"meteor", 0.24}}}},
      {"single", {{{"bleu4", 0.3}, {"meteor", 0.4}}}}};
  const auto rows = aggregate_table(in);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].metrics == std::vector<std::string>{"bleu4", "meteor"});
  CHECK(rows[0].mean[0] == doctest::Approx(12.0));
  CHECK(rows[0].sd[0] == doctest::Approx(2.0));
  CHECK(rows[0].mean[1] == doctest::Approx(22.0));
  CHECK(rows[0].sd[1] == doctest::Approx(2.0));
  CHECK(rows[1].sd == std::vector<double>{0.0, 0.0});
  const std::string md = table_markdown(rows);
  CHECK(md.find("12.00 ± 2.00") != std::string::npos);
  CHECK(table_csv(rows).find("fusion,3") != std::string::npos);

  const std::vector<TableInput> inconsistent{{"x", {{{"bleu4", 0.1}}, {{"bleu4", 0.1}, {"meteor", 0.2}}}}};
  CHECK_THROWS_AS(aggregate_table(inconsistent), ConfigError);
}

TEST_CASE("curve aggregation: one row per grid point") {
  const std::vector<double> grid{0.0, 0.5, 1.0};
  const auto curve = aggregate_curve(grid, {{1.0, 2.0, 3.0}, {3.0, 2.0, 1.0}});
  CHECK(curve[0].mean == doctest::Approx(2.0));
  CHECK(curve[0].sd == doctest::Approx(std::sqrt(2.0)));
  CHECK(curve[1].sd == 0.0);
  const std::string csv = curve_csv(curve);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3);
  CHECK_THROWS_AS(aggregate_curve(grid, {{1.0}}), DimensionError);
}

TEST_CASE("train writes a checkpoint per epoch and reloads the final one") {
  Tiny& t = tiny();
  const auto dir = t.config.run_dir(1);
  CHECK(fs::exists(dir + "/epoch_1.ckpt"));
  CHECK(fs::exists(dir + "/epoch_2.ckpt"));
  CHECK(fs::exists(dir + "/vocab.txt"));
  const TrainedModel again = load_trained(t.config, 1);
  const auto a = t.trained.model.named_parameters(), b = again.model.named_parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::ranges::equal(a[i].tensor.values(), b[i].tensor.values()));
  }
}

TEST_CASE("sweep: one row per grid point, singleton grid, consistency with eval") {
  Tiny& t = tiny();
  const SplitContext val = prepare_split(t.trained.model, t.manifest, Split::kVal);
  const EvalOptions opts = eval_options(t.config, Split::kVal);
  const SweepResult sweep = cmd_sweep(t.trained, val, t.config.grid, "meteor", t.config.decode, opts);
  CHECK(sweep.rows.size() == 3);
  const SweepResult single = cmd_sweep(t.trained, val, {1.0}, "meteor", t.config.decode, opts);
  CHECK(single.chosen_lambda == 1.0);
  CHECK(single.rows.size() == 1);
  CHECK_THROWS_AS(cmd_sweep(t.trained, val, {}, "meteor", t.config.decode, opts), ConfigError);

  // The chosen lambda, evaluated on the same split, reproduces the recorded score.
  const EvalResult at_chosen = cmd_eval(t.trained, val, sweep.chosen_lambda, t.config.decode, opts);
  double recorded = -1.0;
  for (const auto& row : sweep.rows) {
    if (row.lambda == sweep.chosen_lambda) recorded = row.report.meteor;
  }
  CHECK(at_chosen.report.meteor == recorded);
  for (const auto& row : sweep.rows) CHECK(row.report.meteor <= recorded);
}

TEST_CASE("eval is reproducible and vision-only is eval at lambda 0") {
  Tiny& t = tiny();
  const SplitContext eval = prepare_split(t.trained.model, t.manifest, Split::kEval);
  const EvalOptions opts = eval_options(t.config, Split::kEval);
  const EvalResult a = cmd_eval(t.trained, eval, 0.5, t.config.decode, opts);
  const EvalResult b = cmd_eval(t.trained, eval, 0.5, t.config.decode, opts);
  CHECK(dump(a, opts) == dump(b, opts));
  CHECK(a.candidates.size() == 4);
  const EvalResult v = cmd_vision_only(t.trained, eval, t.config.decode, opts);
  const EvalResult z = cmd_eval(t.trained, eval, 0.0, t.config.decode, opts);
  CHECK(dump(v, opts) == dump(z, opts));
  CHECK(v.candidates == z.candidates);
}

TEST_CASE("lambda 1 ignores the secondary stream entirely") {
  Tiny& t = tiny();
  const SplitContext eval = prepare_split(t.trained.model, t.manifest, Split::kEval);
  SplitContext zeroed = eval;
  zeroed.memories.clear();
  for (auto& ex : zeroed.examples) {
    std::fill(ex.secondary.values.begin(), ex.secondary.values.end(), 0.0f);
    zeroed.memories.push_back(encode_clip(t.trained.model, ex));
  }
  const EvalOptions opts = eval_options(t.config, Split::kEval);
  const EvalResult a = cmd_eval(t.trained, eval, 1.0, t.config.decode, opts);
  const EvalResult b = cmd_eval(t.trained, zeroed, 1.0, t.config.decode, opts);
  CHECK(dump(a, opts) == dump(b, opts));
}

TEST_CASE("prior caption is the most frequent training caption") {
  std::vector<ManifestRecord> records{{"a", "", "", {"a dog barks"}, Split::kTrain},
                                      {"b", "", "", {"a cat meows"}, Split::kTrain},
                                      {"c", "", "", {"a dog barks"}, Split::kTrain}};
  CHECK(prior_caption(records) == "a dog barks");
}
