// Copyright 2026 The avcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "avcap/training.h"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "avcap/errors.h"

namespace avcap {
namespace {

EncodedBatch encode(const MultiEncoderTransformer& model, const Batch& b, Stream which) {
  return which == Stream::kAudio
             ? model.encode_batch(b.audio, b.audio_frames, b.audio_valid, Stream::kAudio)
             : model.encode_batch(b.secondary, b.secondary_frames, b.secondary_valid, Stream::kSecondary);
}

std::vector<Tensor> parameter_tensors(const MultiEncoderTransformer& model) {
  std::vector<Tensor> out;
  for (auto& p : model.named_parameters()) out.push_back(p.tensor);
  return out;
}

void clip_gradients(std::vector<Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const double f = max_norm / norm;
  for (auto& p : params) {
    if (!p.has_grad()) continue;
    for (auto& g : p.node()->grad) g *= f;
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0) throw ConfigError("train config: epochs and batch_size must be positive");
  if (!(0.0 <= lambda_low && lambda_low <= lambda_high && lambda_high <= 1.0)) {
    throw ConfigError("train config: need 0 <= lambda_low <= lambda_high <= 1");
  }
  if (decay_every == 0) throw ConfigError("train config: decay_every must be positive");
  if (peak_lr < 0.0 || grad_clip < 0.0) throw ConfigError("train config: negative learning rate or clip");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"peak_lr", c.peak_lr},
                     {"warmup_epochs", c.warmup_epochs},
                     {"decay_every", c.decay_every},
                     {"decay_factor", c.decay_factor},
                     {"decay_from_start", c.decay_from_start},
                     {"lambda_low", c.lambda_low},
                     {"lambda_high", c.lambda_high},
                     {"grad_clip", c.grad_clip},
                     {"spec_mask",
                      {{"enabled", c.spec_mask.enabled},
                       {"max_time", c.spec_mask.max_time},
                       {"max_feature", c.spec_mask.max_feature}}},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.peak_lr = j.value("peak_lr", c.peak_lr);
  c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
  c.decay_every = j.value("decay_every", c.decay_every);
  c.decay_factor = j.value("decay_factor", c.decay_factor);
  c.decay_from_start = j.value("decay_from_start", c.decay_from_start);
  c.lambda_low = j.value("lambda_low", c.lambda_low);
  c.lambda_high = j.value("lambda_high", c.lambda_high);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  if (j.contains("spec_mask")) {
    const auto& s = j.at("spec_mask");
    c.spec_mask.enabled = s.value("enabled", c.spec_mask.enabled);
    c.spec_mask.max_time = s.value("max_time", c.spec_mask.max_time);
    c.spec_mask.max_feature = s.value("max_feature", c.spec_mask.max_feature);
  }
  c.seed = j.value("seed", c.seed);
}

double lr_at(std::size_t epoch, std::size_t step_in_epoch, std::size_t steps_per_epoch, const TrainConfig& config) {
  if (epoch < config.warmup_epochs) {
    const double total = static_cast<double>(config.warmup_epochs * steps_per_epoch);
    const double done = static_cast<double>(epoch * steps_per_epoch + step_in_epoch);
    return config.peak_lr * done / total;
  }
  const std::size_t periods = config.decay_from_start ? epoch / config.decay_every
                                                      : (epoch - config.warmup_epochs) / config.decay_every;
  return config.peak_lr * std::pow(config.decay_factor, static_cast<double>(periods));
}

MixingWeight sample_lambda(std::mt19937_64& rng, const TrainConfig& config) {
  if (config.lambda_low == config.lambda_high) return MixingWeight(config.lambda_low);
  std::uniform_real_distribution<double> dist(config.lambda_low, config.lambda_high);
  return MixingWeight(std::min(config.lambda_high, dist(rng)));
}

void adam_step(std::vector<Tensor>& params, AdamState& state, double lr) {
  if (state.first.empty()) {
    for (const auto& p : params) {
      state.first.emplace_back(p.numel(), 0.0);
      state.second.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.first.size() != params.size()) {
    throw DimensionError("adam_step: state tracks " + std::to_string(state.first.size()) + " tensors, got " +
                         std::to_string(params.size()));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(AdamState::kBeta1, t);
  const double c2 = 1.0 - std::pow(AdamState::kBeta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state.first[i];
    auto& v = state.second[i];
    if (m.size() != p.numel()) {
      throw DimensionError("adam_step: moment size mismatch for tensor " + std::to_string(i));
    }
    const bool has = p.has_grad();
    auto values = p.values();
    const auto grad = p.grad();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double g = has ? grad[k] : 0.0;
      m[k] = AdamState::kBeta1 * m[k] + (1.0 - AdamState::kBeta1) * g;
      v[k] = AdamState::kBeta2 * v[k] + (1.0 - AdamState::kBeta2) * g * g;
      values[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + AdamState::kEpsilon);
    }
  }
}

std::vector<double> per_item_loss(const MultiEncoderTransformer& model, const Batch& batch, MixingWeight mix) {
  const auto a = encode(model, batch, Stream::kAudio);
  const auto s = encode(model, batch, Stream::kSecondary);
  Tensor logits = model.decode(batch.inputs, batch.length, a, s, mix, false, nullptr);
  std::vector<double> out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Tensor rows = slice_rows(logits, i * batch.length, batch.length);
    std::span<const int> tgt(batch.targets.data() + i * batch.length, batch.length);
    out.push_back(cross_entropy(rows, tgt, Vocabulary::kPad).item());
  }
  return out;
}

double evaluate_loss(const MultiEncoderTransformer& model, const std::vector<Example>& examples,
                     const Vocabulary& vocab, MixingWeight mix, std::size_t batch_size) {
  double total = 0.0;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < examples.size(); i += batch_size) {
    std::vector<BatchItem> items;
    for (std::size_t k = i; k < std::min(examples.size(), i + batch_size); ++k) items.push_back({&examples[k], 0});
    const Batch b = collate(items, vocab, model.config().max_caption_len);
    const auto a = encode(model, b, Stream::kAudio);
    const auto s = encode(model, b, Stream::kSecondary);
    Tensor logits = model.decode(b.inputs, b.length, a, s, mix, false, nullptr);
    std::size_t n = 0;
    for (int t : b.targets) n += t != Vocabulary::kPad;
    total += cross_entropy(logits, b.targets, Vocabulary::kPad).item() * static_cast<double>(n);
    tokens += n;
  }
  return tokens == 0 ? 0.0 : total / static_cast<double>(tokens);
}

nlohmann::json to_json(const EpochRecord& r) {
  return nlohmann::json{{"epoch", r.epoch},
                        {"lr", r.lr},
                        {"train_loss", r.train_loss},
                        {"val_loss", r.val_loss},
                        {"wall_time", r.wall_time}};
}

FitResult fit(MultiEncoderTransformer& model, const std::vector<Example>& train, const std::vector<Example>& val,
              const Vocabulary& vocab, const TrainConfig& config, const FitOptions& options) {
  config.validate();
  if (train.empty()) throw ConfigError("fit: no training examples");
  if (model.config().vocab_size != vocab.size()) {
    throw ConfigError("fit: model vocab_size " + std::to_string(model.config().vocab_size) + " != vocabulary size " +
                      std::to_string(vocab.size()));
  }
  std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32), 0x7a11u};
  std::mt19937_64 rng(seq);

  std::ofstream run_log;
  if (!options.output_dir.empty()) {
    std::filesystem::create_directories(options.output_dir);
    run_log.open((std::filesystem::path(options.output_dir) / "run_log.jsonl").string(), std::ios::trunc);
  }

  const auto items = training_items(train);
  const std::size_t steps_per_epoch = (items.size() + config.batch_size - 1) / config.batch_size;
  const auto max_t = config.spec_mask.max_time;
  const auto max_f = config.spec_mask.max_feature;
  const auto started = std::chrono::steady_clock::now();

  AdamState adam;
  std::vector<Tensor> params = parameter_tensors(model);
  FitResult result;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t token_count = 0;
    const auto order = batch_order(items.size(), config.batch_size, config.seed, epoch);
    for (std::size_t bi = 0; bi < order.size(); ++bi) {
      std::vector<BatchItem> chunk;
      std::vector<FeatureSequence> masked;
      for (auto i : order[bi]) {
        chunk.push_back(items[i]);
        if (config.spec_mask.enabled) {
          const auto& audio = items[i].example->audio;
          masked.push_back(spec_mask(audio, max_t == 0 ? audio.frames / 16 : max_t,
                                     max_f == 0 ? audio.dim / 8 : max_f, rng));
        }
      }
      const Batch batch = collate(chunk, vocab, model.config().max_caption_len, masked);
      const MixingWeight mix = sample_lambda(rng, config);
      const double lr = lr_at(epoch, bi, steps_per_epoch, config);

      model.zero_grad();
      Tape tape;
      double loss_value;
      {
        TapeScope scope(tape);
        const auto a = encode(model, batch, Stream::kAudio);
        const auto s = encode(model, batch, Stream::kSecondary);
        Tensor logits = model.decode(batch.inputs, batch.length, a, s, mix, true, &rng);
        Tensor loss = cross_entropy(logits, batch.targets, Vocabulary::kPad);
        loss_value = loss.item();
        if (!std::isfinite(loss_value)) {
          std::ostringstream os;
          os << "non-finite loss at epoch " << epoch << ", batch " << bi << " (clips:";
          for (const auto& id : batch.clip_ids) os << ' ' << id;
          os << ", lambda " << mix.audio() << ", lr " << lr << ")";
          throw TrainingError(os.str());
        }
        backward(loss, tape);
      }
      if (config.grad_clip > 0.0) clip_gradients(params, config.grad_clip);
      adam_step(params, adam, lr);

      std::size_t n = 0;
      for (int t : batch.targets) n += t != Vocabulary::kPad;
      loss_sum += loss_value * static_cast<double>(n);
      token_count += n;
      if (options.on_batch) options.on_batch({epoch, bi, batch.size(), mix.audio(), lr, loss_value});
    }
    model.zero_grad();

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr_at(epoch, 0, steps_per_epoch, config);
    rec.train_loss = loss_sum / static_cast<double>(token_count);
    rec.val_loss = val.empty() ? 0.0 : evaluate_loss(model, val, vocab, MixingWeight(0.5));
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.history.push_back(rec);
    if (!options.output_dir.empty()) {
      save_model((std::filesystem::path(options.output_dir) / ("epoch_" + std::to_string(epoch + 1) + ".ckpt")).string(),
                 model);
      run_log << to_json(rec).dump() << '\n' << std::flush;
    }
    if (options.on_epoch) options.on_epoch(rec);
  }
  return result;
}

}  // namespace avcap
