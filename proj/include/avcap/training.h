// Copyright 2026 The avcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "avcap/data.h"
#include "avcap/model.h"
#include "avcap/textproc.h"

namespace avcap {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  double peak_lr = 0.001;
  std::size_t warmup_epochs = 5;
  std::size_t decay_every = 7;
  double decay_factor = 0.1;
  /// Count decay periods from epoch 0 (decays at 7, 14, ...) instead of from
  /// the end of warmup (12, 19, 26 with the defaults).
  bool decay_from_start = false;
  double lambda_low = 0.25;
  double lambda_high = 1.0;
  /// Global gradient-norm clip; 0 disables.
  double grad_clip = 0.0;
  SpecMaskConfig spec_mask;
  std::uint64_t seed = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

double lr_at(std::size_t epoch, std::size_t step_in_epoch, std::size_t steps_per_epoch, const TrainConfig& config);

MixingWeight sample_lambda(std::mt19937_64& rng, const TrainConfig& config);

struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  std::vector<std::vector<double>> first;
  std::vector<std::vector<double>> second;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update. Parameters without a gradient buffer are
/// treated as having zero gradient.
void adam_step(std::vector<Tensor>& params, AdamState& state, double lr);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double wall_time = 0.0;
};

struct BatchEvent {
  std::size_t epoch = 0;
  std::size_t batch_index = 0;
  std::size_t batch_size = 0;
  double lambda = 0.0;
  double lr = 0.0;
  double loss = 0.0;
};

struct FitOptions {
  /// Directory receiving epoch_{k}.ckpt (k = 1..epochs) and run_log.jsonl; empty = none.
  std::string output_dir;
  std::function<void(const BatchEvent&)> on_batch;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct FitResult {
  std::vector<EpochRecord> history;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mean per-token teacher-forced loss over `examples` (first caption each) at
/// a fixed mixing weight, without dropout.
double evaluate_loss(const MultiEncoderTransformer& model, const std::vector<Example>& examples,
                     const Vocabulary& vocab, MixingWeight mix, std::size_t batch_size = 8);

/// Per-item loss of one collated batch (no dropout), for mask checks.
std::vector<double> per_item_loss(const MultiEncoderTransformer& model, const Batch& batch, MixingWeight mix);

FitResult fit(MultiEncoderTransformer& model, const std::vector<Example>& train, const std::vector<Example>& val,
              const Vocabulary& vocab, const TrainConfig& config, const FitOptions& options = {});

nlohmann::json to_json(const EpochRecord& r);

}  // namespace avcap
