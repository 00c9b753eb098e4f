// Copyright 2026 The avcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "avcap/tensor.h"
#include "avcap/textproc.h"

namespace avcap {

enum class Modality : std::uint8_t { kAudio = 0, kVisual = 1 };

/// One clip's T×D feature matrix, stored at file precision.
struct FeatureSequence {
  std::string clip_id;
  Modality modality = Modality::kAudio;
  std::size_t frames = 0;
  std::size_t dim = 0;
  std::vector<float> values;  // row-major frames × dim

  float at(std::size_t t, std::size_t d) const { return values[t * dim + d]; }
  Tensor to_tensor() const;
};

// FSEQ: "FSQ1", u32 T, u32 D, u8 modality, 7 zero bytes, T·D float32 (all little-endian).
void write_fseq(const std::string& path, const FeatureSequence& seq);
FeatureSequence read_fseq(const std::string& path);
std::string encode_fseq(const FeatureSequence& seq);
FeatureSequence decode_fseq(std::string_view bytes);

enum class Split { kTrain, kVal, kEval };
std::string to_string(Split s);
Split parse_split(const std::string& s);

struct ManifestRecord {
  std::string clip_id;
  std::string audio;      // path, relative to the manifest's directory unless absolute
  std::string secondary;
  std::vector<std::string> captions;
  Split split = Split::kTrain;
};

struct Manifest {
  std::string base_dir;
  std::vector<ManifestRecord> records;

  std::vector<ManifestRecord> split(Split s) const;
  std::string resolve(const std::string& path) const;
  void validate() const;
};

void write_manifest(const std::string& path, const Manifest& manifest);
Manifest read_manifest(const std::string& path);

// ---------------------------------------------------------------------------
// Synthetic audiovisual captioning task.

enum class SecondaryMode { kSemantic, kTemporal, kNoise };
std::string to_string(SecondaryMode m);
SecondaryMode parse_secondary_mode(const std::string& s);

struct EventType {
  std::string noun;
  std::string verb;
};

struct SyntheticTaskConfig {
  std::size_t n_train = 500;
  std::size_t n_val = 50;
  std::size_t n_eval = 100;
  std::size_t frames = 16;
  std::size_t d_audio = 32;
  std::size_t d_secondary = 32;
  SecondaryMode secondary_mode = SecondaryMode::kSemantic;
  std::vector<EventType> events;            // empty → built-in grammar
  std::vector<std::string> modifiers;       // empty → built-in colours
  std::vector<double> modifier_weights;     // empty → built-in skewed prior
  std::size_t min_events = 1;
  std::size_t max_events = 3;
  double noise_sigma = 0.5;
  std::uint64_t seed = 1;

  /// Fills grammar defaults and checks consistency.
  SyntheticTaskConfig resolved() const;
};

void to_json(nlohmann::json& j, const SyntheticTaskConfig& c);
void from_json(const nlohmann::json& j, SyntheticTaskConfig& c);

/// Latent content of one generated clip.
struct ClipContent {
  std::vector<std::size_t> events;  // indices into the grammar, temporal order
  std::size_t modifier = 0;
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // active [begin, end) frames per event
};

/// Caption of `content` in template variant `variant` (0..4).
std::string realize_caption(const SyntheticTaskConfig& resolved, const ClipContent& content, std::size_t variant);
constexpr std::size_t kCaptionVariants = 5;

/// Per-class prototype vectors used to synthesize features.
struct SyntheticPrototypes {
  std::vector<std::vector<double>> audio_event;       // per event type, d_audio
  std::vector<std::vector<double>> visual_noun;       // per event type, d_secondary
  std::vector<std::vector<double>> visual_modifier;   // per modifier, d_secondary
};

struct SyntheticClip {
  ManifestRecord record;
  ClipContent content;
  FeatureSequence audio;
  FeatureSequence secondary;
};

struct SyntheticDataset {
  SyntheticTaskConfig config;  // resolved
  SyntheticPrototypes prototypes;
  std::vector<SyntheticClip> clips;
};

SyntheticDataset generate_synthetic(const SyntheticTaskConfig& config);
/// Generates and writes features under `out_dir/features` plus `out_dir/manifest.jsonl`.
Manifest generate_synthetic_dataset(const SyntheticTaskConfig& config, const std::string& out_dir);

// ---------------------------------------------------------------------------

struct SpecMaskConfig {
  bool enabled = true;
  /// Maximum mask widths; 0 selects the desk-scale default (T/16, D/8).
  std::size_t max_time = 0;
  std::size_t max_feature = 0;
};

/// Zeroes one band of U{0..max_t} frames and one band of U{0..max_f}
/// channels. Widths are clamped to the sequence extents.
FeatureSequence spec_mask(const FeatureSequence& features, std::size_t max_t, std::size_t max_f,
                          std::mt19937_64& rng);

// ---------------------------------------------------------------------------

struct Example {
  std::string clip_id;
  FeatureSequence audio;
  FeatureSequence secondary;
  std::vector<std::vector<std::string>> captions;  // tokenized
};

/// Reads features for every record of `split`. Missing files raise IoError naming the clip.
std::vector<Example> load_examples(const Manifest& manifest, Split split);

/// One training item: a clip and the index of the caption used as target.
struct BatchItem {
  const Example* example = nullptr;
  std::size_t caption = 0;
};

struct Batch {
  std::vector<std::string> clip_ids;
  Tensor audio;      // B·audio_frames × d_audio, zero padded
  Tensor secondary;  // B·secondary_frames × d_secondary
  std::size_t audio_frames = 0;
  std::size_t secondary_frames = 0;
  std::vector<std::size_t> audio_valid;
  std::vector<std::size_t> secondary_valid;
  std::vector<int> inputs;   // B·length, [sos w1..wn] then pad
  std::vector<int> targets;  // B·length, [w1..wn eos] then pad
  std::size_t length = 0;
  std::vector<std::size_t> token_valid;
  std::vector<std::uint8_t> token_mask;  // 1 on real positions

  std::size_t size() const { return clip_ids.size(); }
};

/// Pads and stacks items. Captions longer than max_len - 1 words are truncated.
/// `audio_override`, when non-empty, replaces each item's audio features (used
/// for augmentation).
Batch collate(std::span<const BatchItem> items, const Vocabulary& vocab, std::size_t max_len,
              std::span<const FeatureSequence> audio_override = {});

/// Partition of [0, n) into batches after a seeded shuffle; the order depends
/// on (seed, epoch).
std::vector<std::vector<std::size_t>> batch_order(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                  std::size_t epoch);

/// Training items: every (clip, caption) pair.
std::vector<BatchItem> training_items(const std::vector<Example>& examples);

std::vector<Batch> make_batches(const std::vector<Example>& examples, const Vocabulary& vocab,
                                std::size_t batch_size, std::uint64_t shuffle_seed, std::size_t epoch = 0,
                                std::size_t max_len = 20);

}  // namespace avcap
