// Copyright 2026 The avcap Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment orchestration: dataset generation, per-seed training, the
// validation sweep over the mixing weight, evaluation and aggregation.
// Every run lives in <out_dir>/seed_<s>/.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "avcap/data.h"
#include "avcap/decoding.h"
#include "avcap/metrics.h"
#include "avcap/model.h"
#include "avcap/textproc.h"
#include "avcap/training.h"

namespace avcap {

/// 0, 0.05, ..., 1.0.
std::vector<double> default_grid();

struct ExperimentConfig {
  std::string data_dir = "data";  // holds manifest.jsonl
  std::string out_dir = "runs";
  SyntheticTaskConfig task;
  ModelConfig model;
  TrainConfig train;
  DecodeConfig decode;
  CbowConfig cbow;
  bool pretrain_embeddings = true;
  std::vector<double> grid = default_grid();
  std::string selection_metric = "meteor";
  std::size_t n_seeds = 5;
  std::uint64_t first_seed = 1;
  std::string synonyms_path;  // optional METEOR synonym table
  std::string spice_path;     // optional external SPICE values for the eval split

  void validate() const;
  std::vector<std::uint64_t> seeds() const;
  std::string run_dir(std::uint64_t seed) const;
  std::string manifest_path() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);
/// Relative data/out/table paths are resolved against the config file's directory.
ExperimentConfig load_experiment_config(const std::string& path);

/// Corpus metric by name: bleu4, meteor, rouge_l, cider_d.
double metric_value(const MetricReport& report, const std::string& name);

/// Loaded model plus the vocabulary it was trained with.
struct TrainedModel {
  Vocabulary vocab;
  MultiEncoderTransformer model;
};

Manifest cmd_gen_data(const ExperimentConfig& config);

/// Trains one seed into run_dir(seed). The final model is the last epoch's.
TrainedModel cmd_train(const ExperimentConfig& config, std::uint64_t seed);
TrainedModel load_trained(const ExperimentConfig& config, std::uint64_t seed);

/// Decoding context for one split: examples, manifest records and per-clip
/// encoder memories, which do not depend on the mixing weight and are reused
/// across sweep points.
struct SplitContext {
  std::vector<Example> examples;
  std::vector<ManifestRecord> records;
  std::vector<EncoderMemory> memories;
};

SplitContext prepare_split(const MultiEncoderTransformer& model, const Manifest& manifest, Split split);

std::map<std::string, std::string> decode_captions(const TrainedModel& trained, const SplitContext& split,
                                                   MixingWeight mix, const DecodeConfig& config);

EvalOptions eval_options(const ExperimentConfig& config, Split split);

struct SweepRow {
  double lambda = 0.0;
  MetricReport report;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  double chosen_lambda = 1.0;
  std::vector<std::string> warnings;
};

/// Decodes `split` at every grid point and selects the argmax of the
/// selection metric, preferring the larger λ on ties.
SweepResult cmd_sweep(const TrainedModel& trained, const SplitContext& split, const std::vector<double>& grid,
                      const std::string& selection_metric, const DecodeConfig& decode, const EvalOptions& options);

struct EvalResult {
  double lambda = 0.0;
  std::map<std::string, std::string> candidates;
  MetricReport report;
};

EvalResult cmd_eval(const TrainedModel& trained, const SplitContext& split, double lambda, const DecodeConfig& decode,
                    const EvalOptions& options);
/// cmd_eval with the acoustic weight forced to 0.
EvalResult cmd_vision_only(const TrainedModel& trained, const SplitContext& split, const DecodeConfig& decode,
                           const EvalOptions& options);

struct CurvePoint {
  double lambda = 0.0;
  double mean = 0.0;
  double sd = 0.0;
};

/// Mean and sample standard deviation of CIDEr-D across seeds per grid point.
/// `per_seed[s][g]` is seed s's CIDEr at grid[g].
std::vector<CurvePoint> aggregate_curve(const std::vector<double>& grid,
                                        const std::vector<std::vector<double>>& per_seed);
std::string curve_csv(const std::vector<CurvePoint>& curve);

/// One table row: a configuration and its per-run reports.
struct TableInput {
  std::string label;
  std::vector<nlohmann::json> reports;  // "corpus" sections of report JSON
};

struct TableRow {
  std::string label;
  std::size_t runs = 0;
  std::vector<std::string> metrics;  // Table column order, present ones only
  std::vector<double> mean;          // percent units
  std::vector<double> sd;
};

/// Mean and sample sd (0 for a single run) per metric, ×100. Runs of one row
/// must report the same metric set.
std::vector<TableRow> aggregate_table(const std::vector<TableInput>& inputs);
std::string table_markdown(const std::vector<TableRow>& rows);
std::string table_csv(const std::vector<TableRow>& rows);

/// The most frequent training caption (ties to the lexicographically first),
/// used as a content-free baseline.
std::string prior_caption(const std::vector<ManifestRecord>& train_records);

// Report artifacts.
nlohmann::json sweep_to_json(const SweepResult& sweep, const std::string& selection_metric);
std::string sweep_csv(const SweepResult& sweep);
nlohmann::json eval_to_json(const EvalResult& result, const EvalOptions& options);

/// Writes text exactly (binary mode, no locale), creating parent directories.
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace avcap
