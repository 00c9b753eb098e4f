// Copyright 2026 The avcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "avcap/data.h"
#include "avcap/model.h"

namespace avcap {

struct DecodeConfig {
  std::size_t beam_width = 5;
  std::size_t max_depth = 20;
  double length_norm_alpha = 1.0;
  /// Rank live candidates by normalized score instead of raw log-probability.
  bool normalize_during_pruning = false;

  void validate() const;
};

void to_json(nlohmann::json& j, const DecodeConfig& c);
void from_json(const nlohmann::json& j, DecodeConfig& c);

struct BeamHypothesis {
  std::vector<int> tokens;  // generated words, without sos and eos
  double cum_logprob = 0.0;  // includes the eos step when finished by eos
  bool finished = false;
  bool ended_with_eos = false;
};

/// cum_logprob / length^alpha with length = number of words (eos excluded).
/// An empty hypothesis scores -inf so it is never preferred.
double normalized_score(const BeamHypothesis& h, double alpha);

/// Log-probability source for search. Rows are indexed like the hypotheses
/// passed in; entries of -inf are never expanded.
class StepModel {
 public:
  virtual ~StepModel() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual int eos_id() const = 0;
  /// Log-probabilities of the first token (one row of vocab_size).
  virtual std::vector<double> start() = 0;
  /// New hypothesis i = old hypothesis parents[i] extended by tokens[i].
  /// Returns parents.size() rows, concatenated.
  virtual std::vector<double> advance(std::span<const int> parents, std::span<const int> tokens) = 0;
};

BeamHypothesis beam_search(StepModel& model, const DecodeConfig& config);
/// Argmax at every step (ties to the lower id) until eos or max_depth.
BeamHypothesis greedy_decode(StepModel& model, std::size_t max_depth);

/// Adapts the cached decoder; reserved ids other than eos are excluded.
class TransformerStepModel : public StepModel {
 public:
  TransformerStepModel(const MultiEncoderTransformer& model, const EncoderMemory& memory, MixingWeight mix);

  std::size_t vocab_size() const override { return vocab_; }
  int eos_id() const override;
  std::vector<double> start() override;
  std::vector<double> advance(std::span<const int> parents, std::span<const int> tokens) override;

 private:
  std::vector<double> finish(const Tensor& logprobs) const;

  DecoderSession session_;
  std::size_t vocab_;
};

/// Encodes both streams of one clip once, for repeated decoding.
EncoderMemory encode_clip(const MultiEncoderTransformer& model, const Example& example);

BeamHypothesis beam_search(const MultiEncoderTransformer& model, const EncoderMemory& memory, MixingWeight mix,
                           const DecodeConfig& config);

}  // namespace avcap
