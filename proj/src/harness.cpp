// Copyright 2026 The avcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "avcap/harness.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "avcap/errors.h"

namespace fs = std::filesystem;

namespace avcap {
namespace {

const std::vector<std::string> kTableMetrics{"bleu4", "meteor", "rouge_l", "cider_d", "spice", "spider"};
const std::map<std::string, std::string> kTableHeadings{{"bleu4", "BLEU-4"}, {"meteor", "METEOR"},
                                                        {"rouge_l", "ROUGE-L"}, {"cider_d", "CIDEr"},
                                                        {"spice", "SPICE"}, {"spider", "SPIDEr"}};
const std::vector<std::string> kSweepMetrics{"bleu4", "meteor", "rouge_l", "cider_d"};

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

nlohmann::json cbow_json(const CbowConfig& c) {
  return {{"embedding_dim", c.embedding_dim}, {"window", c.window}, {"negatives", c.negatives},
          {"epochs", c.epochs},               {"learning_rate", c.learning_rate}};
}

void cbow_from_json(const nlohmann::json& j, CbowConfig& c) {
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  c.window = j.value("window", c.window);
  c.negatives = j.value("negatives", c.negatives);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
}

std::string checkpoint_path(const ExperimentConfig& config, std::uint64_t seed) {
  return (fs::path(config.run_dir(seed)) / ("epoch_" + std::to_string(config.train.epochs) + ".ckpt")).string();
}

// Mean and sample standard deviation.
std::pair<double, double> mean_sd(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

// Argmax over rows; later (larger λ) rows win ties.
std::size_t argmax_metric(const std::vector<SweepRow>& rows, const std::string& metric) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (metric_value(rows[i].report, metric) >= metric_value(rows[best].report, metric)) best = i;
  }
  return best;
}

}  // namespace

std::vector<double> default_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(i / 20.0);
  return grid;
}

void ExperimentConfig::validate() const {
  if (grid.empty()) throw ConfigError("experiment config: empty lambda grid");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0 && grid[i] <= 1.0)) throw ConfigError("experiment config: grid value outside [0, 1]");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw ConfigError("experiment config: grid must be strictly increasing");
  }
  if (n_seeds < 1) throw ConfigError("experiment config: n_seeds must be >= 1");
  if (std::find(kSweepMetrics.begin(), kSweepMetrics.end(), selection_metric) == kSweepMetrics.end()) {
    throw ConfigError("experiment config: unknown selection metric '" + selection_metric + "'");
  }
  ModelConfig probe = model;
  probe.vocab_size = std::max<std::size_t>(probe.vocab_size, 1);  // filled in from the data at train time
  probe.validate();
  train.validate();
  decode.validate();
}

std::vector<std::uint64_t> ExperimentConfig::seeds() const {
  std::vector<std::uint64_t> out;
  for (std::size_t k = 0; k < n_seeds; ++k) out.push_back(first_seed + k);
  return out;
}

std::string ExperimentConfig::run_dir(std::uint64_t seed) const {
  return (fs::path(out_dir) / ("seed_" + std::to_string(seed))).string();
}

std::string ExperimentConfig::manifest_path() const { return (fs::path(data_dir) / "manifest.jsonl").string(); }

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"data_dir", c.data_dir},
                     {"out_dir", c.out_dir},
                     {"task", c.task},
                     {"model", c.model},
                     {"train", c.train},
                     {"decode", c.decode},
                     {"cbow", cbow_json(c.cbow)},
                     {"pretrain_embeddings", c.pretrain_embeddings},
                     {"grid", c.grid},
                     {"selection_metric", c.selection_metric},
                     {"n_seeds", c.n_seeds},
                     {"first_seed", c.first_seed},
                     {"synonyms_path", c.synonyms_path},
                     {"spice_path", c.spice_path}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  c.data_dir = j.value("data_dir", c.data_dir);
  c.out_dir = j.value("out_dir", c.out_dir);
  if (j.contains("task")) c.task = j.at("task").get<SyntheticTaskConfig>();
  if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
  if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
  if (j.contains("decode")) c.decode = j.at("decode").get<DecodeConfig>();
  if (j.contains("cbow")) cbow_from_json(j.at("cbow"), c.cbow);
  c.pretrain_embeddings = j.value("pretrain_embeddings", c.pretrain_embeddings);
  c.grid = j.value("grid", c.grid);
  c.selection_metric = j.value("selection_metric", c.selection_metric);
  c.n_seeds = j.value("n_seeds", c.n_seeds);
  c.first_seed = j.value("first_seed", c.first_seed);
  c.synonyms_path = j.value("synonyms_path", c.synonyms_path);
  c.spice_path = j.value("spice_path", c.spice_path);
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("config '" + path + "': " + e.what(), e.byte);
  }
  ExperimentConfig c;
  try {
    c = j.get<ExperimentConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  const fs::path base = fs::path(path).parent_path();
  const auto anchor = [&](std::string& p) {
    if (!p.empty() && fs::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  anchor(c.data_dir);
  anchor(c.out_dir);
  anchor(c.synonyms_path);
  anchor(c.spice_path);
  c.validate();
  return c;
}

double metric_value(const MetricReport& report, const std::string& name) {
  if (name == "bleu4") return report.bleu4;
  if (name == "meteor") return report.meteor;
  if (name == "rouge_l") return report.rouge_l;
  if (name == "cider_d") return report.cider_d;
  throw ConfigError("unknown metric '" + name + "'");
}

Manifest cmd_gen_data(const ExperimentConfig& config) {
  return generate_synthetic_dataset(config.task, config.data_dir);
}

TrainedModel cmd_train(const ExperimentConfig& config, std::uint64_t seed) {
  config.validate();
  const Manifest manifest = read_manifest(config.manifest_path());
  const auto train = load_examples(manifest, Split::kTrain);
  const auto val = load_examples(manifest, Split::kVal);
  if (train.empty()) throw ConfigError("train: manifest '" + config.manifest_path() + "' has no train split");

  std::vector<std::vector<std::string>> corpus;
  for (const auto& e : train) corpus.insert(corpus.end(), e.captions.begin(), e.captions.end());
  const Vocabulary vocab = Vocabulary::build(corpus);

  ModelConfig mc = config.model;
  mc.vocab_size = vocab.size();
  mc.d_audio_in = train.front().audio.dim;
  mc.d_secondary_in = train.front().secondary.dim;
  MultiEncoderTransformer model(mc, seed);
  if (config.pretrain_embeddings) {
    CbowConfig cc = config.cbow;
    cc.embedding_dim = mc.d_model;
    cc.seed = seed;
    model.load_embedding(train_cbow(corpus, vocab, cc).embeddings);
  }

  const std::string dir = config.run_dir(seed);
  fs::create_directories(dir);
  vocab.save((fs::path(dir) / "vocab.txt").string());
  nlohmann::json snapshot = config;
  snapshot["model"] = mc;
  snapshot["seed"] = seed;
  write_text_file((fs::path(dir) / "experiment.json").string(), snapshot.dump(2) + "\n");

  TrainConfig tc = config.train;
  tc.seed = seed;
  FitOptions options;
  options.output_dir = dir;
  fit(model, train, val, vocab, tc, options);
  // Reload so the returned model matches the stored (float32) checkpoint exactly.
  return load_trained(config, seed);
}

TrainedModel load_trained(const ExperimentConfig& config, std::uint64_t seed) {
  const fs::path dir = config.run_dir(seed);
  const auto snapshot = nlohmann::json::parse(read_text_file((dir / "experiment.json").string()));
  TrainedModel out{Vocabulary::load((dir / "vocab.txt").string()),
                   MultiEncoderTransformer(snapshot.at("model").get<ModelConfig>(), seed)};
  load_model(checkpoint_path(config, seed), out.model);
  return out;
}

SplitContext prepare_split(const MultiEncoderTransformer& model, const Manifest& manifest, Split split) {
  SplitContext ctx;
  ctx.examples = load_examples(manifest, split);
  ctx.records = manifest.split(split);
  if (ctx.examples.empty()) throw ConfigError("split '" + to_string(split) + "' is empty");
  for (const auto& e : ctx.examples) ctx.memories.push_back(encode_clip(model, e));
  return ctx;
}

std::map<std::string, std::string> decode_captions(const TrainedModel& trained, const SplitContext& split,
                                                   MixingWeight mix, const DecodeConfig& config) {
  std::map<std::string, std::string> out;
  for (std::size_t i = 0; i < split.examples.size(); ++i) {
    const auto best = beam_search(trained.model, split.memories[i], mix, config);
    out[split.examples[i].clip_id] = trained.vocab.decode_text(best.tokens);
  }
  return out;
}

EvalOptions eval_options(const ExperimentConfig& config, Split split) {
  EvalOptions o;
  if (!config.spice_path.empty() && split == Split::kEval) o.spice = read_spice(config.spice_path);
  if (!config.synonyms_path.empty()) {
    o.synonym_table = std::make_shared<const SynonymTable>(SynonymTable::load(config.synonyms_path));
    o.meteor.synonyms = o.synonym_table.get();
  }
  return o;
}

SweepResult cmd_sweep(const TrainedModel& trained, const SplitContext& split, const std::vector<double>& grid,
                      const std::string& selection_metric, const DecodeConfig& decode, const EvalOptions& options) {
  if (grid.empty()) throw ConfigError("sweep: empty lambda grid");
  metric_value(MetricReport{}, selection_metric);
  SweepResult out;
  for (double lambda : grid) {
    const auto candidates = decode_captions(trained, split, MixingWeight(lambda), decode);
    out.rows.push_back({lambda, evaluate_corpus(candidates, split.records, options)});
  }
  out.chosen_lambda = out.rows[argmax_metric(out.rows, selection_metric)].lambda;
  for (const auto& m : kSweepMetrics) {
    if (m == selection_metric) continue;
    const double other = out.rows[argmax_metric(out.rows, m)].lambda;
    if (std::abs(other - out.chosen_lambda) > 0.15 + 1e-12) {
      out.warnings.push_back(m + " peaks at lambda " + fixed(other, 2) + ", " + selection_metric + " at " +
                             fixed(out.chosen_lambda, 2));
    }
  }
  return out;
}

EvalResult cmd_eval(const TrainedModel& trained, const SplitContext& split, double lambda, const DecodeConfig& decode,
                    const EvalOptions& options) {
  EvalResult r;
  r.lambda = lambda;
  r.candidates = decode_captions(trained, split, MixingWeight(lambda), decode);
  r.report = evaluate_corpus(r.candidates, split.records, options);
  return r;
}

EvalResult cmd_vision_only(const TrainedModel& trained, const SplitContext& split, const DecodeConfig& decode,
                           const EvalOptions& options) {
  return cmd_eval(trained, split, 0.0, decode, options);
}

std::vector<CurvePoint> aggregate_curve(const std::vector<double>& grid,
                                        const std::vector<std::vector<double>>& per_seed) {
  if (per_seed.empty()) throw ConfigError("curve: no seeds");
  std::vector<CurvePoint> out;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    std::vector<double> xs;
    for (const auto& s : per_seed) {
      if (s.size() != grid.size()) throw DimensionError("curve: seed row length differs from grid");
      xs.push_back(s[g]);
    }
    const auto [m, sd] = mean_sd(xs);
    out.push_back({grid[g], m, sd});
  }
  return out;
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::string out = "lambda,cider_mean,cider_sd\n";
  for (const auto& p : curve) out += fixed(p.lambda, 2) + "," + fixed(p.mean, 6) + "," + fixed(p.sd, 6) + "\n";
  return out;
}

std::vector<TableRow> aggregate_table(const std::vector<TableInput>& inputs) {
  std::vector<TableRow> rows;
  for (const auto& in : inputs) {
    if (in.reports.empty()) throw ConfigError("table: configuration '" + in.label + "' has no runs");
    TableRow row;
    row.label = in.label;
    row.runs = in.reports.size();
    for (const auto& m : kTableMetrics) {
      if (in.reports.front().contains(m)) row.metrics.push_back(m);
    }
    for (const auto& rep : in.reports) {
      for (const auto& m : kTableMetrics) {
        const bool expected = std::find(row.metrics.begin(), row.metrics.end(), m) != row.metrics.end();
        if (rep.contains(m) != expected) {
          throw ConfigError("table: inconsistent metric sets in configuration '" + in.label + "' (" + m + ")");
        }
      }
    }
    for (const auto& m : row.metrics) {
      std::vector<double> xs;
      for (const auto& rep : in.reports) xs.push_back(100.0 * rep.at(m).get<double>());
      const auto [mean, sd] = mean_sd(xs);
      row.mean.push_back(mean);
      row.sd.push_back(sd);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string table_markdown(const std::vector<TableRow>& rows) {
  std::string out = "| Configuration | Runs |";
  std::string rule = "|---|---|";
  for (const auto& m : kTableMetrics) {
    out += " " + kTableHeadings.at(m) + " |";
    rule += "---|";
  }
  out += "\n" + rule + "\n";
  for (const auto& r : rows) {
    out += "| " + r.label + " | " + std::to_string(r.runs) + " |";
    for (const auto& m : kTableMetrics) {
      auto it = std::find(r.metrics.begin(), r.metrics.end(), m);
      if (it == r.metrics.end()) {
        out += " - |";
      } else {
        const auto k = static_cast<std::size_t>(it - r.metrics.begin());
        out += " " + fixed(r.mean[k], 2) + " ± " + fixed(r.sd[k], 2) + " |";
      }
    }
    out += "\n";
  }
  return out;
}

std::string table_csv(const std::vector<TableRow>& rows) {
  std::string out = "configuration,runs";
  for (const auto& m : kTableMetrics) out += "," + m + "_mean," + m + "_sd";
  out += "\n";
  for (const auto& r : rows) {
    out += r.label + "," + std::to_string(r.runs);
    for (const auto& m : kTableMetrics) {
      auto it = std::find(r.metrics.begin(), r.metrics.end(), m);
      if (it == r.metrics.end()) {
        out += ",,";
      } else {
        const auto k = static_cast<std::size_t>(it - r.metrics.begin());
        out += "," + fixed(r.mean[k], 4) + "," + fixed(r.sd[k], 4);
      }
    }
    out += "\n";
  }
  return out;
}

std::string prior_caption(const std::vector<ManifestRecord>& train_records) {
  std::map<std::string, std::size_t> counts;
  for (const auto& r : train_records) {
    for (const auto& c : r.captions) ++counts[join_tokens(tokenize(c))];
  }
  if (counts.empty()) throw ConfigError("prior_caption: no training captions");
  auto best = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  return best->first;
}

nlohmann::json sweep_to_json(const SweepResult& sweep, const std::string& selection_metric) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : sweep.rows) {
    rows.push_back({{"lambda", r.lambda},
                    {"bleu4", r.report.bleu4},
                    {"meteor", r.report.meteor},
                    {"rouge_l", r.report.rouge_l},
                    {"cider_d", r.report.cider_d}});
  }
  return {{"selection_metric", selection_metric},
          {"chosen_lambda", sweep.chosen_lambda},
          {"rows", rows},
          {"warnings", sweep.warnings}};
}

std::string sweep_csv(const SweepResult& sweep) {
  std::string out = "lambda,bleu4,meteor,rouge_l,cider_d\n";
  for (const auto& r : sweep.rows) {
    out += fixed(r.lambda, 2) + "," + fixed(r.report.bleu4, 6) + "," + fixed(r.report.meteor, 6) + "," +
           fixed(r.report.rouge_l, 6) + "," + fixed(r.report.cider_d, 6) + "\n";
  }
  return out;
}

nlohmann::json eval_to_json(const EvalResult& result, const EvalOptions& options) {
  return {{"lambda", result.lambda}, {"report", report_to_json(result.report, options)}};
}

void write_text_file(const std::string& path, const std::string& text) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace avcap
