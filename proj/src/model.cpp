// Copyright 2026 The avcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "avcap/model.h"

#include <cmath>
#include <utility>

#include "avcap/errors.h"

namespace avcap {
namespace {

Linear make_linear(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l;
  l.weight = Tensor::uniform({in, out}, -bound, bound, rng, true);
  l.bias = Tensor::uniform({out}, -bound, bound, rng, true);
  return l;
}

LayerNormParams make_norm(std::size_t d) {
  return {Tensor(Shape{d}, std::vector<double>(d, 1.0), true), Tensor::zeros({d}, true)};
}

AttentionParams make_attention(std::size_t d, std::mt19937_64& rng) {
  AttentionParams p;
  p.query = make_linear(d, d, rng);
  p.key = make_linear(d, d, rng);
  p.value = make_linear(d, d, rng);
  p.output = make_linear(d, d, rng);
  return p;
}

void add_linear(std::vector<NamedTensor>& out, const std::string& prefix, const Linear& l) {
  out.push_back({prefix + ".weight", l.weight});
  out.push_back({prefix + ".bias", l.bias});
}

void add_attention(std::vector<NamedTensor>& out, const std::string& prefix, const AttentionParams& p) {
  add_linear(out, prefix + ".query", p.query);
  add_linear(out, prefix + ".key", p.key);
  add_linear(out, prefix + ".value", p.value);
  add_linear(out, prefix + ".output", p.output);
}

void add_norm(std::vector<NamedTensor>& out, const std::string& prefix, const LayerNormParams& n) {
  out.push_back({prefix + ".gain", n.gain});
  out.push_back({prefix + ".bias", n.bias});
}

// Allowed-key mask for `rows` queries over a block of `frames` keys of which
// the first `valid` are real.
std::vector<std::uint8_t> key_padding_mask(std::size_t rows, std::size_t frames, std::size_t valid) {
  std::vector<std::uint8_t> m(rows * frames, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < valid && j < frames; ++j) m[r * frames + j] = 1;
  }
  return m;
}

Tensor mix_streams(const Tensor& audio, const Tensor& secondary, MixingWeight mix) {
  return add(scale(audio, mix.audio()), scale(secondary, mix.secondary()));
}

}  // namespace

void ModelConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || n_layers == 0 || d_ff == 0 || vocab_size == 0 || max_caption_len == 0 ||
      d_audio_in == 0 || d_secondary_in == 0) {
    throw ConfigError("model config: all extents must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("model config: d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                      std::to_string(n_heads));
  }
  if (d_model % 2 != 0) throw ConfigError("model config: d_model must be even for sinusoidal positions");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model config: dropout must lie in [0, 1)");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"d_model", c.d_model},
                     {"n_heads", c.n_heads},
                     {"n_layers", c.n_layers},
                     {"d_ff", c.d_ff},
                     {"dropout", c.dropout},
                     {"vocab_size", c.vocab_size},
                     {"max_caption_len", c.max_caption_len},
                     {"d_audio_in", c.d_audio_in},
                     {"d_secondary_in", c.d_secondary_in},
                     {"encoder_positions", c.encoder_positions},
                     {"scale_embedding", c.scale_embedding}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.d_model = j.value("d_model", c.d_model);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.dropout = j.value("dropout", c.dropout);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.max_caption_len = j.value("max_caption_len", c.max_caption_len);
  c.d_audio_in = j.value("d_audio_in", c.d_audio_in);
  c.d_secondary_in = j.value("d_secondary_in", c.d_secondary_in);
  c.encoder_positions = j.value("encoder_positions", c.encoder_positions);
  c.scale_embedding = j.value("scale_embedding", c.scale_embedding);
}

MixingWeight::MixingWeight(double audio) : audio_(audio) {
  if (!(audio >= 0.0 && audio <= 1.0)) {
    throw ContractError("mixing weight must lie in [0, 1], got " + std::to_string(audio));
  }
}

Tensor sinusoidal_positions(std::size_t max_len, std::size_t d_model) {
  if (d_model == 0 || d_model % 2 != 0) {
    throw ConfigError("sinusoidal_positions: d_model must be even, got " + std::to_string(d_model));
  }
  std::vector<double> pe(max_len * d_model);
  for (std::size_t pos = 0; pos < max_len; ++pos) {
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double angle = static_cast<double>(pos) /
                           std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
      pe[pos * d_model + 2 * i] = std::sin(angle);
      pe[pos * d_model + 2 * i + 1] = std::cos(angle);
    }
  }
  return Tensor({max_len, d_model}, std::move(pe));
}

std::vector<std::uint8_t> causal_mask(std::size_t n) {
  std::vector<std::uint8_t> m(n * n, 0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c <= r; ++c) m[r * n + c] = 1;
  }
  return m;
}

Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t n_heads,
              std::span<const std::uint8_t> allowed) {
  const std::size_t d = q.cols();
  if (k.cols() != d || v.cols() != d || k.rows() != v.rows() || n_heads == 0 || d % n_heads != 0) {
    throw DimensionError("attend: incompatible q " + shape_string(q.shape()) + ", k " + shape_string(k.shape()) +
                         ", v " + shape_string(v.shape()) + " for " + std::to_string(n_heads) + " heads");
  }
  if (!allowed.empty() && allowed.size() != q.rows() * k.rows()) {
    throw DimensionError("attend: mask of " + std::to_string(allowed.size()) + " entries for a " +
                         std::to_string(q.rows()) + "x" + std::to_string(k.rows()) + " score matrix");
  }
  const std::size_t dk = d / n_heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<std::uint8_t> all;
  if (allowed.empty()) {
    all.assign(q.rows() * k.rows(), 1);
    allowed = all;
  }
  std::vector<Tensor> heads;
  heads.reserve(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h) {
    Tensor qh = n_heads == 1 ? q : slice_cols(q, h * dk, dk);
    Tensor kh = n_heads == 1 ? k : slice_cols(k, h * dk, dk);
    Tensor vh = n_heads == 1 ? v : slice_cols(v, h * dk, dk);
    Tensor weights = masked_softmax(scale(matmul_nt(qh, kh), inv_scale), allowed);
    heads.push_back(matmul(weights, vh));
  }
  return n_heads == 1 ? heads.front() : concat_cols(heads);
}

Tensor multi_head_attention(const Tensor& query_in, const Tensor& memory_in, const AttentionParams& params,
                            std::size_t n_heads, std::span<const std::uint8_t> allowed) {
  Tensor q = params.query(query_in);
  Tensor k = params.key(memory_in);
  Tensor v = params.value(memory_in);
  return params.output(attend(q, k, v, n_heads, allowed));
}

// ---------------------------------------------------------------------------

MultiEncoderTransformer::MultiEncoderTransformer(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const auto d = config_.d_model;
  encoder_audio_ = make_linear(config_.d_audio_in, d, rng);
  encoder_secondary_ = make_linear(config_.d_secondary_in, d, rng);
  const double emb_bound = 1.0 / std::sqrt(static_cast<double>(d));
  token_embedding_ = Tensor::uniform({config_.vocab_size, d}, -emb_bound, emb_bound, rng, true);
  layers_.resize(config_.n_layers);
  for (auto& layer : layers_) {
    layer.norm_self = make_norm(d);
    layer.norm_cross = make_norm(d);
    layer.norm_ff = make_norm(d);
    layer.self_attn = make_attention(d, rng);
    layer.cross_audio = make_attention(d, rng);
    layer.cross_secondary = make_attention(d, rng);
    layer.ff_in = make_linear(d, config_.d_ff, rng);
    layer.ff_out = make_linear(config_.d_ff, d, rng);
  }
  final_norm_ = make_norm(d);
  output_ = make_linear(d, config_.vocab_size, rng);
  positions_ = sinusoidal_positions(config_.max_caption_len, d);
}

std::vector<NamedTensor> MultiEncoderTransformer::named_parameters() const {
  std::vector<NamedTensor> out;
  add_linear(out, "encoder_audio", encoder_audio_);
  add_linear(out, "encoder_secondary", encoder_secondary_);
  out.push_back({"token_embedding", token_embedding_});
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto p = "layers." + std::to_string(i);
    const auto& l = layers_[i];
    add_norm(out, p + ".norm_self", l.norm_self);
    add_attention(out, p + ".self_attn", l.self_attn);
    add_norm(out, p + ".norm_cross", l.norm_cross);
    add_attention(out, p + ".cross_audio", l.cross_audio);
    add_attention(out, p + ".cross_secondary", l.cross_secondary);
    add_norm(out, p + ".norm_ff", l.norm_ff);
    add_linear(out, p + ".ff_in", l.ff_in);
    add_linear(out, p + ".ff_out", l.ff_out);
  }
  add_norm(out, "final_norm", final_norm_);
  add_linear(out, "output", output_);
  return out;
}

std::size_t MultiEncoderTransformer::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : named_parameters()) n += p.tensor.numel();
  return n;
}

std::size_t MultiEncoderTransformer::parameter_count(const ModelConfig& c) {
  const auto d = c.d_model;
  const auto attention = 4 * (d * d + d);
  const auto per_layer = 3 * 2 * d + 3 * attention + (d * c.d_ff + c.d_ff) + (c.d_ff * d + d);
  return (c.d_audio_in * d + d) + (c.d_secondary_in * d + d) + c.vocab_size * d + c.n_layers * per_layer + 2 * d +
         (d * c.vocab_size + c.vocab_size);
}

void MultiEncoderTransformer::zero_grad() {
  for (auto& p : named_parameters()) p.tensor.zero_grad();
}

void MultiEncoderTransformer::load_embedding(const Tensor& table) {
  if (table.shape() != token_embedding_.shape()) {
    throw DimensionError("load_embedding: table " + shape_string(table.shape()) + " does not match " +
                         shape_string(token_embedding_.shape()));
  }
  std::copy(table.values().begin(), table.values().end(), token_embedding_.values().begin());
}

Tensor MultiEncoderTransformer::encode_stream(const Tensor& features, Stream which) const {
  const auto expected = which == Stream::kAudio ? config_.d_audio_in : config_.d_secondary_in;
  if (features.rank() != 2 || features.cols() != expected) {
    throw DimensionError(std::string("encode_stream: ") + (which == Stream::kAudio ? "audio" : "secondary") +
                         " features " + shape_string(features.shape()) + " but configured width is " +
                         std::to_string(expected));
  }
  const Linear& enc = which == Stream::kAudio ? encoder_audio_ : encoder_secondary_;
  Tensor h = relu(enc(features));
  if (config_.encoder_positions) {
    h = add(h, sinusoidal_positions(features.rows(), config_.d_model));
  }
  return h;
}

EncodedBatch MultiEncoderTransformer::encode_batch(const Tensor& stacked, std::size_t frames,
                                                   std::vector<std::size_t> valid, Stream which) const {
  if (frames == 0 || stacked.rows() != frames * valid.size()) {
    throw DimensionError("encode_batch: " + shape_string(stacked.shape()) + " is not " +
                         std::to_string(valid.size()) + " blocks of " + std::to_string(frames) + " frames");
  }
  EncodedBatch out;
  out.frames = frames;
  out.valid = std::move(valid);
  if (!config_.encoder_positions) {
    out.states = encode_stream(stacked, which);
    return out;
  }
  std::vector<Tensor> blocks;
  for (std::size_t b = 0; b < out.valid.size(); ++b) {
    blocks.push_back(encode_stream(slice_rows(stacked, b * frames, frames), which));
  }
  out.states = concat_rows(blocks);
  return out;
}

Tensor MultiEncoderTransformer::embed(std::span<const int> tokens, std::size_t length) const {
  if (length == 0 || tokens.size() % length != 0) {
    throw DimensionError("decode: " + std::to_string(tokens.size()) + " tokens is not a whole number of rows of " +
                         std::to_string(length));
  }
  if (length > config_.max_caption_len) {
    throw IndexError("decode: sequence length " + std::to_string(length) + " exceeds max_caption_len " +
                     std::to_string(config_.max_caption_len));
  }
  Tensor x = embedding(token_embedding_, tokens);
  if (config_.scale_embedding) x = scale(x, std::sqrt(static_cast<double>(config_.d_model)));
  const std::size_t batch = tokens.size() / length;
  Tensor pos = slice_rows(positions_, 0, length);
  std::vector<Tensor> tiled(batch, pos);
  return add(x, batch == 1 ? pos : concat_rows(tiled));
}

Tensor MultiEncoderTransformer::dual_cross_attention(const Tensor& x, const Tensor& h_audio,
                                                     const Tensor& h_secondary, MixingWeight mix,
                                                     const DecoderLayer& layer) const {
  Tensor a = multi_head_attention(x, h_audio, layer.cross_audio, config_.n_heads);
  Tensor s = multi_head_attention(x, h_secondary, layer.cross_secondary, config_.n_heads);
  return mix_streams(a, s, mix);
}

namespace {

// Attention for a stacked batch: queries in blocks of `q_len` rows, memory in
// blocks of `kv_len` rows; `mask_for(b)` yields block b's allowed mask.
template <typename MaskFn>
Tensor batched_attention(const Tensor& query_in, const Tensor& memory_in, const AttentionParams& p,
                         std::size_t n_heads, std::size_t batch, std::size_t q_len, std::size_t kv_len,
                         MaskFn mask_for) {
  Tensor q = p.query(query_in);
  Tensor k = p.key(memory_in);
  Tensor v = p.value(memory_in);
  if (batch == 1) return p.output(attend(q, k, v, n_heads, mask_for(0)));
  std::vector<Tensor> blocks;
  blocks.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto mask = mask_for(b);
    blocks.push_back(attend(slice_rows(q, b * q_len, q_len), slice_rows(k, b * kv_len, kv_len),
                            slice_rows(v, b * kv_len, kv_len), n_heads, mask));
  }
  return p.output(concat_rows(blocks));
}

}  // namespace

Tensor MultiEncoderTransformer::decode(std::span<const int> tokens, std::size_t length, const EncodedBatch& audio,
                                       const EncodedBatch& secondary, MixingWeight mix, bool training,
                                       std::mt19937_64* rng, ForwardTrace* trace) const {
  if (training && rng == nullptr) throw ContractError("decode: training mode needs an rng for dropout");
  Tensor x = embed(tokens, length);
  const std::size_t batch = tokens.size() / length;
  if (audio.batch() != batch || secondary.batch() != batch) {
    throw DimensionError("decode: encoder batches (" + std::to_string(audio.batch()) + ", " +
                         std::to_string(secondary.batch()) + ") do not match " + std::to_string(batch) +
                         " token rows");
  }
  const double p = config_.dropout;
  std::mt19937_64 unused;
  std::mt19937_64& r = rng != nullptr ? *rng : unused;
  if (trace != nullptr) trace->lambda_per_call.push_back(mix.audio());

  x = dropout(x, p, training, r);
  const auto causal = causal_mask(length);
  for (const auto& layer : layers_) {
    Tensor y = layer.norm_self(x);
    Tensor sa = batched_attention(y, y, layer.self_attn, config_.n_heads, batch, length, length,
                                  [&](std::size_t) { return std::span<const std::uint8_t>(causal); });
    x = add(x, dropout(sa, p, training, r));

    y = layer.norm_cross(x);
    auto cross = [&](const EncodedBatch& enc, const AttentionParams& params) {
      std::vector<std::uint8_t> mask;
      return batched_attention(y, enc.states, params, config_.n_heads, batch, length, enc.frames,
                               [&](std::size_t b) {
                                 mask = key_padding_mask(length, enc.frames, enc.valid[b]);
                                 return std::span<const std::uint8_t>(mask);
                               });
    };
    Tensor mixed = mix_streams(cross(audio, layer.cross_audio), cross(secondary, layer.cross_secondary), mix);
    if (trace != nullptr) trace->mixed_cross.push_back(mixed);
    x = add(x, dropout(mixed, p, training, r));

    y = layer.norm_ff(x);
    Tensor ff = layer.ff_out(relu(layer.ff_in(y)));
    x = add(x, dropout(ff, p, training, r));
  }
  return output_(final_norm_(x));
}

Tensor MultiEncoderTransformer::decoder_forward(std::span<const int> tokens, const Tensor& h_audio,
                                                const Tensor& h_secondary, MixingWeight mix, bool training,
                                                std::mt19937_64* rng, ForwardTrace* trace) const {
  EncodedBatch a{h_audio, h_audio.rows(), {h_audio.rows()}};
  EncodedBatch s{h_secondary, h_secondary.rows(), {h_secondary.rows()}};
  return decode(tokens, tokens.size(), a, s, mix, training, rng, trace);
}

EncoderMemory MultiEncoderTransformer::precompute_memory(const Tensor& h_audio, const Tensor& h_secondary) const {
  EncoderMemory mem;
  for (const auto& layer : layers_) {
    mem.layers.push_back({layer.cross_audio.key(h_audio), layer.cross_audio.value(h_audio),
                          layer.cross_secondary.key(h_secondary), layer.cross_secondary.value(h_secondary)});
  }
  return mem;
}

// ---------------------------------------------------------------------------

DecoderSession::DecoderSession(const MultiEncoderTransformer& model, const EncoderMemory& memory, MixingWeight mix)
    : model_(model), memory_(memory), mix_(mix) {
  if (memory_.layers.size() != model_.layers_.size()) {
    throw DimensionError("DecoderSession: memory has " + std::to_string(memory_.layers.size()) +
                         " layers, model has " + std::to_string(model_.layers_.size()));
  }
}

Tensor DecoderSession::start(int sos_id) {
  cache_.assign(model_.layers_.size(), {});
  length_ = 0;
  return step({sos_id});
}

Tensor DecoderSession::advance(std::span<const int> parents, std::span<const int> tokens) {
  if (parents.size() != tokens.size() || parents.empty()) {
    throw DimensionError("DecoderSession::advance: parents/tokens size mismatch");
  }
  for (auto& layer_cache : cache_) {
    std::vector<std::pair<Tensor, Tensor>> reordered;
    reordered.reserve(parents.size());
    for (int parent : parents) {
      if (parent < 0 || static_cast<std::size_t>(parent) >= layer_cache.size()) {
        throw IndexError("DecoderSession::advance: parent " + std::to_string(parent) + " out of range");
      }
      reordered.push_back(layer_cache[static_cast<std::size_t>(parent)]);
    }
    layer_cache = std::move(reordered);
  }
  return step(std::vector<int>(tokens.begin(), tokens.end()));
}

Tensor DecoderSession::step(const std::vector<int>& tokens) {
  const auto& cfg = model_.config_;
  if (length_ >= cfg.max_caption_len) {
    throw IndexError("DecoderSession: sequence length would exceed max_caption_len " +
                     std::to_string(cfg.max_caption_len));
  }
  const std::size_t n = tokens.size();
  Tensor x = embedding(model_.token_embedding_, tokens);
  if (cfg.scale_embedding) x = scale(x, std::sqrt(static_cast<double>(cfg.d_model)));
  Tensor pos = slice_rows(model_.positions_, length_, 1);
  x = add(x, n == 1 ? pos : concat_rows(std::vector<Tensor>(n, pos)));

  for (std::size_t li = 0; li < model_.layers_.size(); ++li) {
    const auto& layer = model_.layers_[li];
    auto& layer_cache = cache_[li];
    if (layer_cache.empty()) layer_cache.resize(n);

    Tensor y = layer.norm_self(x);
    Tensor q = layer.self_attn.query(y);
    Tensor k = layer.self_attn.key(y);
    Tensor v = layer.self_attn.value(y);
    std::vector<Tensor> rows;
    rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto& [keys, values] = layer_cache[i];
      Tensor ki = n == 1 ? k : slice_rows(k, i, 1);
      Tensor vi = n == 1 ? v : slice_rows(v, i, 1);
      keys = length_ == 0 ? ki : concat_rows({keys, ki});
      values = length_ == 0 ? vi : concat_rows({values, vi});
      rows.push_back(attend(n == 1 ? q : slice_rows(q, i, 1), keys, values, cfg.n_heads));
    }
    x = add(x, layer.self_attn.output(n == 1 ? rows.front() : concat_rows(rows)));

    y = layer.norm_cross(x);
    const auto& mem = memory_.layers[li];
    Tensor a = layer.cross_audio.output(
        attend(layer.cross_audio.query(y), mem.key_audio, mem.value_audio, cfg.n_heads));
    Tensor s = layer.cross_secondary.output(
        attend(layer.cross_secondary.query(y), mem.key_secondary, mem.value_secondary, cfg.n_heads));
    x = add(x, mix_streams(a, s, mix_));

    y = layer.norm_ff(x);
    x = add(x, layer.ff_out(relu(layer.ff_in(y))));
  }
  ++length_;
  return log_softmax(model_.output_(model_.final_norm_(x)));
}

}  // namespace avcap
