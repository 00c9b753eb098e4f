// Copyright 2026 The avcap Authors
// SPDX-License-Identifier: Apache-2.0
//
// Multi-encoder transformer: two single-layer feedforward encoders (audio and
// secondary stream) feeding a pre-layer-norm decoder whose cross-attention is
// duplicated per stream and linearly mixed.

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "avcap/tensor.h"

namespace avcap {

struct ModelConfig {
  std::size_t d_model = 128;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t d_ff = 2048;
  double dropout = 0.2;
  std::size_t vocab_size = 0;
  std::size_t max_caption_len = 20;
  std::size_t d_audio_in = 32;
  std::size_t d_secondary_in = 32;
  bool encoder_positions = false;
  bool scale_embedding = true;

  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Weight of the always-acoustic first encoder; the second stream gets 1 - audio.
class MixingWeight {
 public:
  explicit MixingWeight(double audio);
  double audio() const { return audio_; }
  double secondary() const { return 1.0 - audio_; }

 private:
  double audio_;
};

enum class Stream { kAudio, kSecondary };

struct Linear {
  Tensor weight;  // in × out
  Tensor bias;    // out

  Tensor operator()(const Tensor& x) const { return add_row_vector(matmul(x, weight), bias); }
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }
};

struct AttentionParams {
  Linear query, key, value, output;
};

struct DecoderLayer {
  LayerNormParams norm_self, norm_cross, norm_ff;
  AttentionParams self_attn;
  AttentionParams cross_audio;
  AttentionParams cross_secondary;
  Linear ff_in, ff_out;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// PE(pos, 2i) = sin(pos / 10000^(2i/d)), PE(pos, 2i+1) = cos(same).
Tensor sinusoidal_positions(std::size_t max_len, std::size_t d_model);

/// Scaled dot-product attention over already-projected q (n×d), k, v (m×d),
/// split into `n_heads` column blocks and concatenated back. `allowed` is an
/// n×m 0/1 mask, or empty for no masking. Fully masked rows yield zeros.
Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t n_heads,
              std::span<const std::uint8_t> allowed = {});

/// Projects inputs through `params`, attends, and applies the output projection.
Tensor multi_head_attention(const Tensor& query_in, const Tensor& memory_in, const AttentionParams& params,
                            std::size_t n_heads, std::span<const std::uint8_t> allowed = {});

/// Lower-triangular n×n mask (position t sees positions <= t).
std::vector<std::uint8_t> causal_mask(std::size_t n);

/// Encoder outputs for a batch: `states` stacks B blocks of `frames` rows;
/// rows past `valid[b]` inside block b are padding.
struct EncodedBatch {
  Tensor states;
  std::size_t frames = 0;
  std::vector<std::size_t> valid;

  std::size_t batch() const { return valid.size(); }
};

/// Optional instrumentation of a decoder pass.
struct ForwardTrace {
  std::vector<Tensor> mixed_cross;      // per layer, λ-mixed cross-attention output
  std::vector<double> lambda_per_call;  // λ used by each decode() call
};

/// Per-layer projected encoder keys/values, computed once per clip for decoding.
struct EncoderMemory {
  struct Layer {
    Tensor key_audio, value_audio, key_secondary, value_secondary;
  };
  std::vector<Layer> layers;
};

class MultiEncoderTransformer {
 public:
  MultiEncoderTransformer(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  /// Canonical parameter list; order is stable and used by checkpoints.
  std::vector<NamedTensor> named_parameters() const;
  std::size_t parameter_count() const;
  static std::size_t parameter_count(const ModelConfig& config);
  void zero_grad();

  /// Overwrites token embedding rows with `table` (vocab_size × d_model).
  void load_embedding(const Tensor& table);

  /// Single feedforward layer + ReLU applied row-wise: rows×D_in -> rows×d_model.
  Tensor encode_stream(const Tensor& features, Stream which) const;
  /// Stacked, padded batch variant; positions (if enabled) are added per block.
  EncodedBatch encode_batch(const Tensor& stacked, std::size_t frames, std::vector<std::size_t> valid,
                            Stream which) const;

  /// λ·CrossAttn_audio(x, h_audio) + (1-λ)·CrossAttn_secondary(x, h_secondary) for
  /// one sequence. `x` is the (already normalized) decoder state.
  Tensor dual_cross_attention(const Tensor& x, const Tensor& h_audio, const Tensor& h_secondary,
                              MixingWeight mix, const DecoderLayer& layer) const;

  /// Teacher-forced decoder pass over a padded batch of token rows
  /// (`tokens.size() == batch * length`). Returns (batch*length) × vocab logits.
  /// Dropout is active iff `training`, in which case `rng` must be non-null.
  Tensor decode(std::span<const int> tokens, std::size_t length, const EncodedBatch& audio,
                const EncodedBatch& secondary, MixingWeight mix, bool training, std::mt19937_64* rng,
                ForwardTrace* trace = nullptr) const;

  /// Single-sequence convenience wrapper around decode().
  Tensor decoder_forward(std::span<const int> tokens, const Tensor& h_audio, const Tensor& h_secondary,
                         MixingWeight mix, bool training, std::mt19937_64* rng = nullptr,
                         ForwardTrace* trace = nullptr) const;

  EncoderMemory precompute_memory(const Tensor& h_audio, const Tensor& h_secondary) const;

  const std::vector<DecoderLayer>& layers() const { return layers_; }
  const Tensor& positions() const { return positions_; }

 private:
  friend class DecoderSession;

  Tensor embed(std::span<const int> tokens, std::size_t length) const;

  ModelConfig config_;
  Linear encoder_audio_;
  Linear encoder_secondary_;
  Tensor token_embedding_;
  std::vector<DecoderLayer> layers_;
  LayerNormParams final_norm_;
  Linear output_;
  Tensor positions_;
};

/// Incremental (cached) decoding against one clip's encoder memory. Each
/// hypothesis keeps per-layer self-attention keys/values so a step only
/// processes the newest token. The model must outlive the session and stay
/// frozen while it is in use.
class DecoderSession {
 public:
  DecoderSession(const MultiEncoderTransformer& model, const EncoderMemory& memory, MixingWeight mix);

  /// Starts from a single hypothesis holding the start token; returns its
  /// log-probabilities (1 × vocab).
  Tensor start(int sos_id);
  /// New hypothesis i extends old hypothesis parents[i] with tokens[i].
  /// Returns log-probabilities, one row per new hypothesis.
  Tensor advance(std::span<const int> parents, std::span<const int> tokens);

  std::size_t length() const { return length_; }

 private:
  Tensor step(const std::vector<int>& tokens);

  const MultiEncoderTransformer& model_;
  const EncoderMemory& memory_;
  MixingWeight mix_;
  std::size_t length_ = 0;
  // cache_[layer][hyp] = {keys, values} of shape length × d_model
  std::vector<std::vector<std::pair<Tensor, Tensor>>> cache_;
};

// Checkpoint container: text header of parameter names and shapes followed by
// little-endian float32 payloads in header order.
void write_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(const std::string& path);
void save_model(const std::string& path, const MultiEncoderTransformer& model);
/// Loads values into `model`; names and shapes must match exactly.
void load_model(const std::string& path, MultiEncoderTransformer& model);

}  // namespace avcap
