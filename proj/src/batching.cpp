// Copyright 2026 The avcap Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <filesystem>
#include <numeric>

#include "avcap/data.h"
#include "avcap/errors.h"

namespace avcap {
namespace {

FeatureSequence read_clip_features(const Manifest& m, const std::string& clip_id, const std::string& path) {
  const auto full = m.resolve(path);
  if (!std::filesystem::exists(full)) {
    throw IoError("clip '" + clip_id + "': feature file '" + full + "' does not exist");
  }
  try {
    auto seq = read_fseq(full);
    seq.clip_id = clip_id;
    return seq;
  } catch (const FormatError& e) {
    throw IoError("clip '" + clip_id + "': " + e.what());
  }
}

// Stacks per-item matrices into B blocks of max-frames rows, zero padded.
Tensor stack_padded(const std::vector<const FeatureSequence*>& seqs, std::size_t& frames,
                    std::vector<std::size_t>& valid) {
  frames = 0;
  const std::size_t dim = seqs.front()->dim;
  for (const auto* s : seqs) {
    if (s->dim != dim) {
      throw DimensionError("batch: feature width " + std::to_string(s->dim) + " of '" + s->clip_id +
                           "' differs from " + std::to_string(dim));
    }
    frames = std::max(frames, s->frames);
  }
  std::vector<double> out(seqs.size() * frames * dim, 0.0);
  valid.clear();
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    std::copy(seqs[b]->values.begin(), seqs[b]->values.end(),
              out.begin() + static_cast<std::ptrdiff_t>(b * frames * dim));
    valid.push_back(seqs[b]->frames);
  }
  return Tensor({seqs.size() * frames, dim}, std::move(out));
}

}  // namespace

std::vector<Example> load_examples(const Manifest& manifest, Split split) {
  std::vector<Example> out;
  for (const auto& r : manifest.records) {
    if (r.split != split) continue;
    Example e;
    e.clip_id = r.clip_id;
    e.audio = read_clip_features(manifest, r.clip_id, r.audio);
    e.secondary = read_clip_features(manifest, r.clip_id, r.secondary);
    for (const auto& c : r.captions) e.captions.push_back(tokenize(c));
    out.push_back(std::move(e));
  }
  return out;
}

Batch collate(std::span<const BatchItem> items, const Vocabulary& vocab, std::size_t max_len,
              std::span<const FeatureSequence> audio_override) {
  if (items.empty()) throw ContractError("collate: empty batch");
  if (max_len < 2) throw ConfigError("collate: max_len must allow sos + one token");
  if (!audio_override.empty() && audio_override.size() != items.size()) {
    throw DimensionError("collate: audio override count does not match batch");
  }
  Batch b;
  std::vector<const FeatureSequence*> audio, secondary;
  std::vector<TokenSequence> words;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& ex = *items[i].example;
    b.clip_ids.push_back(ex.clip_id);
    audio.push_back(audio_override.empty() ? &ex.audio : &audio_override[i]);
    secondary.push_back(&ex.secondary);
    auto ids = vocab.encode(ex.captions.at(items[i].caption));
    if (ids.size() > max_len - 1) ids.resize(max_len - 1);
    b.length = std::max(b.length, ids.size() + 1);
    words.push_back(std::move(ids));
  }
  b.audio = stack_padded(audio, b.audio_frames, b.audio_valid);
  b.secondary = stack_padded(secondary, b.secondary_frames, b.secondary_valid);

  const auto n = items.size();
  b.inputs.assign(n * b.length, Vocabulary::kPad);
  b.targets.assign(n * b.length, Vocabulary::kPad);
  b.token_mask.assign(n * b.length, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& w = words[i];
    const std::size_t base = i * b.length;
    b.inputs[base] = Vocabulary::kSos;
    for (std::size_t t = 0; t < w.size(); ++t) {
      b.inputs[base + t + 1] = w[t];
      b.targets[base + t] = w[t];
    }
    b.targets[base + w.size()] = Vocabulary::kEos;
    for (std::size_t t = 0; t <= w.size(); ++t) b.token_mask[base + t] = 1;
    b.token_valid.push_back(w.size() + 1);
  }
  return b;
}

std::vector<std::vector<std::size_t>> batch_order(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                  std::size_t epoch) {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x5eedu};
  std::mt19937_64 rng(seq);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size) {
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(i),
                     perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  }
  return out;
}

std::vector<BatchItem> training_items(const std::vector<Example>& examples) {
  std::vector<BatchItem> items;
  for (const auto& e : examples) {
    for (std::size_t c = 0; c < e.captions.size(); ++c) items.push_back({&e, c});
  }
  return items;
}

std::vector<Batch> make_batches(const std::vector<Example>& examples, const Vocabulary& vocab,
                                std::size_t batch_size, std::uint64_t shuffle_seed, std::size_t epoch,
                                std::size_t max_len) {
  const auto items = training_items(examples);
  std::vector<Batch> out;
  for (const auto& idx : batch_order(items.size(), batch_size, shuffle_seed, epoch)) {
    std::vector<BatchItem> chunk;
    for (auto i : idx) chunk.push_back(items[i]);
    out.push_back(collate(chunk, vocab, max_len));
  }
  return out;
}

}  // namespace avcap
