// Copyright 2026 The avcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "avcap/textproc.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <unordered_map>

#include "avcap/errors.h"

namespace avcap {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else if (std::ispunct(c)) {
      continue;
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& corpus, std::size_t min_count) {
  if (corpus.empty()) throw ConfigError("build_vocab: empty corpus");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& caption : corpus) {
    for (const auto& t : caption) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : counts) {
    if (n >= min_count) kept.emplace_back(tok, n);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [tok, n] : kept) tokens.push_back(tok);
  return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    const auto& t = v.tokens_[i];
    if (t.empty() || tokenize(t) != std::vector<std::string>{t}) {
      throw ConfigError("vocabulary: '" + t + "' is not a normalized token");
    }
    if (!v.ids_.emplace(t, static_cast<int>(i) + kReserved).second) {
      throw ConfigError("vocabulary: duplicate token '" + t + "'");
    }
  }
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  static const std::string reserved[kReserved] = {"<pad>", "<sos>", "<eos>", "<unk>"};
  if (id < 0 || static_cast<std::size_t>(id) >= size()) {
    throw IndexError("vocabulary: id " + std::to_string(id) + " outside [0, " + std::to_string(size()) + ")");
  }
  return id < kReserved ? reserved[id] : tokens_[static_cast<std::size_t>(id - kReserved)];
}

TokenSequence Vocabulary::encode(const std::vector<std::string>& tokens) const {
  TokenSequence ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  for (int i : ids) {
    if (!is_reserved(i)) out.push_back(token(i));
  }
  return out;
}

std::string Vocabulary::decode_text(std::span<const int> ids) const { return join_tokens(decode(ids)); }

void Vocabulary::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("vocabulary: cannot open '" + path + "' for writing");
  for (const auto& t : tokens_) f << t << '\n';
  if (!f) throw IoError("vocabulary: write to '" + path + "' failed");
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("vocabulary: cannot open '" + path + "'");
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(f, line)) tokens.push_back(line);
  return from_tokens(std::move(tokens));
}

}  // namespace avcap
