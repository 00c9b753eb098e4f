// Copyright 2026 The avcap Authors
// SPDX-License-Identifier: Apache-2.0
//
// Captioning metrics over tokenized candidate / multi-reference pairs:
// corpus BLEU-4, lexical METEOR, ROUGE-L, CIDEr-D and SPIDEr.

#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "avcap/data.h"

namespace avcap {

using Words = std::vector<std::string>;

struct EvalPair {
  std::string clip_id;
  Words candidate;
  std::vector<Words> references;
};

// --- BLEU --------------------------------------------------------------------

/// Clipped n-gram matches and total candidate n-grams of one pair.
std::pair<std::size_t, std::size_t> clipped_ngram_counts(const Words& candidate, const std::vector<Words>& references,
                                                         std::size_t n);

/// Reference length closest to `candidate_length`; ties go to the shorter.
std::size_t closest_reference_length(std::size_t candidate_length, const std::vector<Words>& references);

/// Corpus BLEU-4 with uniform weights. `smoothing` adds one to numerator and
/// denominator of the n > 1 precisions. An empty candidate corpus scores 0.
double bleu4(const std::vector<EvalPair>& pairs, bool smoothing = false);

// --- ROUGE-L -----------------------------------------------------------------

std::size_t lcs_length(const Words& a, const Words& b);
constexpr double kRougeBeta = 1.2;
double rouge_l(const Words& candidate, const std::vector<Words>& references, double beta = kRougeBeta);

// --- METEOR ------------------------------------------------------------------

/// Undirected synonym groups; each line of a table file lists one group of
/// whitespace-separated words.
class SynonymTable {
 public:
  void add_group(const Words& group);
  static SynonymTable load(const std::string& path);
  bool synonyms(const std::string& a, const std::string& b) const;
  bool empty() const { return group_of_.empty(); }

 private:
  std::map<std::string, std::set<std::size_t>> group_of_;
  std::size_t groups_ = 0;
};

struct MeteorOptions {
  bool stemming = true;
  const SynonymTable* synonyms = nullptr;
  /// Leaf budget for the chunk-minimizing search per stage; when exhausted the
  /// best alignment found so far is kept.
  std::size_t search_budget = 200000;
};

struct MeteorAlignment {
  std::vector<std::pair<std::size_t, std::size_t>> matches;  // (candidate index, reference index), sorted
  std::size_t chunks = 0;
};

MeteorAlignment meteor_align(const Words& candidate, const Words& reference, const MeteorOptions& options = {});
double meteor_score(const Words& candidate, const Words& reference, const MeteorOptions& options = {});
/// Best score over references.
double meteor(const Words& candidate, const std::vector<Words>& references, const MeteorOptions& options = {});

// --- CIDEr-D -----------------------------------------------------------------

struct CiderOptions {
  double sigma = 6.0;
  std::size_t max_n = 4;
};

/// Per-pair CIDEr-D (0..10). Document frequencies come from the references of
/// `pairs`, counting each clip once. Needs at least two clips.
std::vector<double> cider_d(const std::vector<EvalPair>& pairs, const CiderOptions& options = {});

// --- SPIDEr ------------------------------------------------------------------

std::optional<double> spider(std::optional<double> cider, std::optional<double> spice);

// --- Reports -----------------------------------------------------------------

struct EvalOptions {
  bool bleu_smoothing = false;
  MeteorOptions meteor;
  CiderOptions cider;
  /// External per-clip SPICE values; SPICE and SPIDEr are reported only when
  /// every clip has one.
  std::map<std::string, double> spice;
  /// Owns the table `meteor.synonyms` points at when it was loaded from a file.
  std::shared_ptr<const SynonymTable> synonym_table;
};

struct SampleScores {
  std::string clip_id;
  double meteor = 0.0;
  double rouge_l = 0.0;
  double cider_d = 0.0;
};

struct MetricReport {
  double bleu4 = 0.0;
  double meteor = 0.0;
  double rouge_l = 0.0;
  double cider_d = 0.0;
  std::optional<double> spice;
  std::optional<double> spider;
  std::vector<SampleScores> samples;  // sorted by clip id
  std::vector<std::string> warnings;
};

/// Scores `pairs`; the result does not depend on the order of pairs or references.
MetricReport evaluate_pairs(std::vector<EvalPair> pairs, const EvalOptions& options = {});

/// Pairs every record with its candidate caption (tokenized with the shared
/// tokenizer). A record without a candidate raises ContractError naming it.
MetricReport evaluate_corpus(const std::map<std::string, std::string>& candidates,
                             const std::vector<ManifestRecord>& records, const EvalOptions& options = {});

nlohmann::json report_to_json(const MetricReport& report, const EvalOptions& options = {});
/// Table column order: BLEU-4, METEOR, ROUGE-L, CIDEr, SPICE, SPIDEr.
std::string report_csv_header();
std::string report_csv_row(const MetricReport& report);

/// JSON-lines {clip_id, caption}.
std::map<std::string, std::string> read_candidates(const std::string& path);
void write_candidates(const std::string& path, const std::map<std::string, std::string>& candidates);
/// JSON-lines {clip_id, spice}.
std::map<std::string, double> read_spice(const std::string& path);

}  // namespace avcap
