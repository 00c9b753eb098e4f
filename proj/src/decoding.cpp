// Copyright 2026 The avcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "avcap/decoding.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "avcap/errors.h"
#include "avcap/textproc.h"

namespace avcap {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Candidate {
  std::size_t parent;
  int token;
  double cum;
  double key;
};

// Higher key first, then lower token id, then earlier parent.
bool ranks_before(const Candidate& a, const Candidate& b) {
  if (a.key != b.key) return a.key > b.key;
  if (a.token != b.token) return a.token < b.token;
  return a.parent < b.parent;
}

class FinishedPool {
 public:
  FinishedPool(std::size_t capacity, double alpha) : capacity_(capacity), alpha_(alpha) {}

  void admit(BeamHypothesis h) {
    h.finished = true;
    const double s = normalized_score(h, alpha_);
    if (pool_.size() < capacity_) {
      pool_.push_back({std::move(h), s});
      return;
    }
    // Evict the worst (latest admitted among equals) if the newcomer beats it.
    auto worst = pool_.begin();
    for (auto it = pool_.begin(); it != pool_.end(); ++it) {
      if (it->score <= worst->score) worst = it;
    }
    if (s > worst->score) *worst = {std::move(h), s};
  }

  bool empty() const { return pool_.empty(); }

  // Best by normalized score; earliest admitted wins ties.
  BeamHypothesis best() const {
    auto best = pool_.begin();
    for (auto it = pool_.begin(); it != pool_.end(); ++it) {
      if (it->score > best->score) best = it;
    }
    return best->hyp;
  }

 private:
  struct Entry {
    BeamHypothesis hyp;
    double score;
  };
  std::size_t capacity_;
  double alpha_;
  std::vector<Entry> pool_;
};

}  // namespace

void DecodeConfig::validate() const {
  if (beam_width < 1) throw ConfigError("decode config: beam_width must be >= 1");
  if (max_depth < 1) throw ConfigError("decode config: max_depth must be >= 1");
  if (!(length_norm_alpha >= 0.0)) throw ConfigError("decode config: length_norm_alpha must be >= 0");
}

void to_json(nlohmann::json& j, const DecodeConfig& c) {
  j = nlohmann::json{{"beam_width", c.beam_width},
                     {"max_depth", c.max_depth},
                     {"length_norm_alpha", c.length_norm_alpha},
                     {"normalize_during_pruning", c.normalize_during_pruning}};
}

void from_json(const nlohmann::json& j, DecodeConfig& c) {
  c.beam_width = j.value("beam_width", c.beam_width);
  c.max_depth = j.value("max_depth", c.max_depth);
  c.length_norm_alpha = j.value("length_norm_alpha", c.length_norm_alpha);
  c.normalize_during_pruning = j.value("normalize_during_pruning", c.normalize_during_pruning);
}

double normalized_score(const BeamHypothesis& h, double alpha) {
  if (h.tokens.empty()) return kNegInf;
  return h.cum_logprob / std::pow(static_cast<double>(h.tokens.size()), alpha);
}

BeamHypothesis beam_search(StepModel& model, const DecodeConfig& config) {
  config.validate();
  const std::size_t vocab = model.vocab_size();
  const int eos = model.eos_id();
  const double alpha = config.length_norm_alpha;

  std::vector<BeamHypothesis> live(1);
  std::vector<double> rows = model.start();
  FinishedPool pool(config.beam_width, alpha);

  for (std::size_t depth = 1; depth <= config.max_depth && !live.empty(); ++depth) {
    if (rows.size() != live.size() * vocab) {
      throw DimensionError("beam_search: step model returned " + std::to_string(rows.size()) + " scores for " +
                           std::to_string(live.size()) + " hypotheses");
    }
    std::vector<Candidate> cands;
    cands.reserve(live.size() * vocab);
    for (std::size_t p = 0; p < live.size(); ++p) {
      for (std::size_t v = 0; v < vocab; ++v) {
        const double lp = rows[p * vocab + v];
        if (lp == kNegInf || std::isnan(lp)) continue;
        const double cum = live[p].cum_logprob + lp;
        double key = cum;
        if (config.normalize_during_pruning) {
          const std::size_t len = live[p].tokens.size() + (static_cast<int>(v) == eos ? 0 : 1);
          key = len == 0 ? kNegInf : cum / std::pow(static_cast<double>(len), alpha);
        }
        cands.push_back({p, static_cast<int>(v), cum, key});
      }
    }
    const std::size_t keep = std::min(config.beam_width, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), ranks_before);

    std::vector<BeamHypothesis> next;
    std::vector<int> parents, tokens;
    for (std::size_t i = 0; i < keep; ++i) {
      const auto& c = cands[i];
      BeamHypothesis h;
      h.tokens = live[c.parent].tokens;
      h.cum_logprob = c.cum;
      if (c.token == eos) {
        h.ended_with_eos = true;
        pool.admit(std::move(h));
        continue;
      }
      h.tokens.push_back(c.token);
      next.push_back(std::move(h));
      parents.push_back(static_cast<int>(c.parent));
      tokens.push_back(c.token);
    }
    if (depth == config.max_depth) {
      for (auto& h : next) pool.admit(std::move(h));
      next.clear();
    }
    live = std::move(next);
    if (!live.empty()) rows = model.advance(parents, tokens);
  }
  if (pool.empty()) return BeamHypothesis{{}, kNegInf, true, false};
  return pool.best();
}

BeamHypothesis greedy_decode(StepModel& model, std::size_t max_depth) {
  if (max_depth < 1) throw ConfigError("greedy_decode: max_depth must be >= 1");
  const std::size_t vocab = model.vocab_size();
  const int eos = model.eos_id();
  BeamHypothesis h;
  std::vector<double> row = model.start();
  for (std::size_t depth = 1; depth <= max_depth; ++depth) {
    std::size_t arg = 0;
    for (std::size_t v = 1; v < vocab; ++v) {
      if (row[v] > row[arg]) arg = v;
    }
    h.cum_logprob += row[arg];
    if (static_cast<int>(arg) == eos) {
      h.ended_with_eos = true;
      break;
    }
    h.tokens.push_back(static_cast<int>(arg));
    if (depth == max_depth) break;
    const int parent = 0;
    const int token = static_cast<int>(arg);
    row = model.advance({&parent, 1}, {&token, 1});
  }
  h.finished = true;
  return h;
}

TransformerStepModel::TransformerStepModel(const MultiEncoderTransformer& model, const EncoderMemory& memory,
                                           MixingWeight mix)
    : session_(model, memory, mix), vocab_(model.config().vocab_size) {}

int TransformerStepModel::eos_id() const { return Vocabulary::kEos; }

std::vector<double> TransformerStepModel::finish(const Tensor& logprobs) const {
  std::vector<double> out(logprobs.values().begin(), logprobs.values().end());
  for (std::size_t r = 0; r < logprobs.rows(); ++r) {
    for (int id = 0; id < Vocabulary::kReserved; ++id) {
      if (id != Vocabulary::kEos) out[r * vocab_ + static_cast<std::size_t>(id)] = kNegInf;
    }
  }
  return out;
}

std::vector<double> TransformerStepModel::start() { return finish(session_.start(Vocabulary::kSos)); }

std::vector<double> TransformerStepModel::advance(std::span<const int> parents, std::span<const int> tokens) {
  return finish(session_.advance(parents, tokens));
}

EncoderMemory encode_clip(const MultiEncoderTransformer& model, const Example& example) {
  const Tensor h_audio = model.encode_stream(example.audio.to_tensor(), Stream::kAudio);
  const Tensor h_secondary = model.encode_stream(example.secondary.to_tensor(), Stream::kSecondary);
  return model.precompute_memory(h_audio, h_secondary);
}

BeamHypothesis beam_search(const MultiEncoderTransformer& model, const EncoderMemory& memory, MixingWeight mix,
                           const DecodeConfig& config) {
  TransformerStepModel step(model, memory, mix);
  return beam_search(step, config);
}

}  // namespace avcap
