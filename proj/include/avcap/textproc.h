// Copyright 2026 The avcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "avcap/tensor.h"

namespace avcap {

using TokenSequence = std::vector<int>;

/// Lowercases, strips punctuation, splits on whitespace.
std::vector<std::string> tokenize(std::string_view text);
std::string join_tokens(const std::vector<std::string>& tokens);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kSos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kReserved = 4;

  /// Tokens with count >= min_count receive ids after the reserved block in
  /// order of decreasing frequency, ties broken lexicographically.
  static Vocabulary build(const std::vector<std::vector<std::string>>& corpus, std::size_t min_count = 1);
  /// Ids follow list order starting at kReserved.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size() + kReserved; }
  int id(const std::string& token) const;
  const std::string& token(int id) const;
  bool contains(const std::string& token) const { return ids_.count(token) != 0; }
  static bool is_reserved(int id) { return id >= 0 && id < kReserved; }

  TokenSequence encode(const std::vector<std::string>& tokens) const;
  /// Reserved ids are dropped.
  std::vector<std::string> decode(std::span<const int> ids) const;
  std::string decode_text(std::span<const int> ids) const;

  /// One token per line; line k holds id k + kReserved.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int, std::less<>> ids_;
};

struct CbowConfig {
  std::size_t embedding_dim = 128;
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t epochs = 20;
  double learning_rate = 0.025;
  std::uint64_t seed = 1;
};

struct CbowResult {
  Tensor embeddings;                // vocab_size × embedding_dim (input side)
  std::vector<double> epoch_loss;   // mean negative-sampling loss per epoch
};

/// Continuous bag-of-words with negative sampling over already tokenized
/// captions. Reserved rows keep a N(0, 0.01²) initialization.
CbowResult train_cbow(const std::vector<std::vector<std::string>>& corpus, const Vocabulary& vocab,
                      const CbowConfig& config);

}  // namespace avcap
