// Copyright 2026 The avcap Authors
// SPDX-License-Identifier: Apache-2.0
//
// word2vec-style CBOW: the mean of the context input vectors scores the
// centre word against `negatives` samples drawn from unigram^0.75.

#include <algorithm>
#include <cmath>
#include <random>

#include "avcap/errors.h"
#include "avcap/textproc.h"

namespace avcap {
namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

CbowResult train_cbow(const std::vector<std::vector<std::string>>& corpus, const Vocabulary& vocab,
                      const CbowConfig& config) {
  if (corpus.empty()) throw ConfigError("train_cbow: empty corpus");
  if (config.window < 1) throw ConfigError("train_cbow: window must be >= 1");
  if (config.embedding_dim == 0) throw ConfigError("train_cbow: embedding_dim must be positive");

  const std::size_t v = vocab.size();
  const std::size_t dim = config.embedding_dim;
  std::mt19937_64 rng(config.seed);

  std::vector<double> input(v * dim), output(v * dim, 0.0);
  std::normal_distribution<double> reserved_init(0.0, 0.01);
  std::uniform_real_distribution<double> word_init(-0.5 / static_cast<double>(dim), 0.5 / static_cast<double>(dim));
  for (std::size_t w = 0; w < v; ++w) {
    for (std::size_t j = 0; j < dim; ++j) {
      input[w * dim + j] = Vocabulary::is_reserved(static_cast<int>(w)) ? reserved_init(rng) : word_init(rng);
    }
  }

  std::vector<std::vector<int>> sentences;
  std::vector<double> counts(v, 0.0);
  std::size_t total_words = 0;
  for (const auto& caption : corpus) {
    std::vector<int> ids;
    for (int id : vocab.encode(caption)) {
      if (Vocabulary::is_reserved(id)) continue;
      ids.push_back(id);
      counts[static_cast<std::size_t>(id)] += 1.0;
    }
    total_words += ids.size();
    sentences.push_back(std::move(ids));
  }
  CbowResult result;
  if (total_words == 0) {
    result.embeddings = Tensor({v, dim}, std::move(input));
    return result;
  }

  std::vector<double> weights(v);
  for (std::size_t w = 0; w < v; ++w) weights[w] = std::pow(counts[w], 0.75);
  std::discrete_distribution<int> noise(weights.begin(), weights.end());

  const double total_steps = static_cast<double>(config.epochs * total_words);
  std::size_t step = 0;
  std::vector<double> hidden(dim), err(dim);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double loss = 0.0;
    std::size_t terms = 0;
    for (const auto& s : sentences) {
      for (std::size_t pos = 0; pos < s.size(); ++pos, ++step) {
        const double lr =
            std::max(config.learning_rate * 1e-4, config.learning_rate * (1.0 - static_cast<double>(step) / total_steps));
        const std::size_t lo = pos >= config.window ? pos - config.window : 0;
        const std::size_t hi = std::min(s.size(), pos + config.window + 1);
        std::size_t n_ctx = 0;
        std::fill(hidden.begin(), hidden.end(), 0.0);
        for (std::size_t c = lo; c < hi; ++c) {
          if (c == pos) continue;
          const double* row = input.data() + static_cast<std::size_t>(s[c]) * dim;
          for (std::size_t j = 0; j < dim; ++j) hidden[j] += row[j];
          ++n_ctx;
        }
        if (n_ctx == 0) continue;
        for (auto& h : hidden) h /= static_cast<double>(n_ctx);
        std::fill(err.begin(), err.end(), 0.0);

        const int target = s[pos];
        for (std::size_t k = 0; k <= config.negatives; ++k) {
          int word = target;
          double label = 1.0;
          if (k > 0) {
            word = noise(rng);
            if (word == target) continue;
            label = 0.0;
          }
          double* out_row = output.data() + static_cast<std::size_t>(word) * dim;
          double dot = 0.0;
          for (std::size_t j = 0; j < dim; ++j) dot += hidden[j] * out_row[j];
          const double p = sigmoid(dot);
          loss -= label > 0.5 ? std::log(std::max(p, 1e-300)) : std::log(std::max(1.0 - p, 1e-300));
          const double g = (label - p) * lr;
          for (std::size_t j = 0; j < dim; ++j) {
            err[j] += g * out_row[j];
            out_row[j] += g * hidden[j];
          }
        }
        ++terms;
        for (std::size_t c = lo; c < hi; ++c) {
          if (c == pos) continue;
          double* row = input.data() + static_cast<std::size_t>(s[c]) * dim;
          for (std::size_t j = 0; j < dim; ++j) row[j] += err[j];
        }
      }
    }
    result.epoch_loss.push_back(terms == 0 ? 0.0 : loss / static_cast<double>(terms));
  }
  result.embeddings = Tensor({v, dim}, std::move(input));
  return result;
}

}  // namespace avcap
