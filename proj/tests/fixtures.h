// Copyright 2026 The avcap Authors
// SPDX-License-Identifier: Apache-2.0
//
// Small shared builders for tests.

#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "avcap/model.h"

namespace avcap::testing {

inline ModelConfig tiny_config(std::size_t vocab = 11) {
  ModelConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_layers = 2;
  c.d_ff = 32;
  c.dropout = 0.0;
  c.vocab_size = vocab;
  c.max_caption_len = 20;
  c.d_audio_in = 6;
  c.d_secondary_in = 5;
  return c;
}

inline Tensor random_features(std::size_t frames, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return Tensor::uniform({frames, dim}, -1.0, 1.0, rng);
}

/// Fresh, empty scratch directory under the system temp dir.
inline std::string scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("avcap_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

}  // namespace avcap::testing
