// Copyright 2026 The avcap Authors
// SPDX-License-Identifier: Apache-2.0
//
// Porter stemmer. Terminology follows the original paper: a word is
// [C](VC)^m[V], and m is the "measure" of the stem left after removing a
// suffix. 'y' is a vowel when it follows a consonant.

#include "avcap/stemmer.h"

#include <array>
#include <utility>

namespace avcap {
namespace {

class Stemmer {
 public:
  explicit Stemmer(std::string_view word) : w_(word) {}

  std::string run() {
    if (w_.size() <= 2) return w_;
    step1a();
    step1b();
    step1c();
    step2();
    step3();
    step4();
    step5();
    return w_;
  }

 private:
  bool consonant(std::size_t i) const {
    switch (w_[i]) {
      case 'a': case 'e': case 'i': case 'o': case 'u':
        return false;
      case 'y':
        return i == 0 || !consonant(i - 1);
      default:
        return true;
    }
  }

  // Measure of w_[0, len).
  int measure(std::size_t len) const {
    int m = 0;
    std::size_t i = 0;
    while (i < len && consonant(i)) ++i;
    while (i < len) {
      while (i < len && !consonant(i)) ++i;
      if (i >= len) break;
      while (i < len && consonant(i)) ++i;
      ++m;
    }
    return m;
  }

  bool has_vowel(std::size_t len) const {
    for (std::size_t i = 0; i < len; ++i) {
      if (!consonant(i)) return true;
    }
    return false;
  }

  bool double_consonant(std::size_t len) const {
    return len >= 2 && w_[len - 1] == w_[len - 2] && consonant(len - 1);
  }

  // cvc where the final c is not w, x or y.
  bool cvc(std::size_t len) const {
    if (len < 3 || !consonant(len - 1) || consonant(len - 2) || !consonant(len - 3)) return false;
    const char c = w_[len - 1];
    return c != 'w' && c != 'x' && c != 'y';
  }

  bool ends(std::string_view suffix) const {
    return w_.size() >= suffix.size() && std::string_view(w_).substr(w_.size() - suffix.size()) == suffix;
  }

  std::size_t stem_len(std::string_view suffix) const { return w_.size() - suffix.size(); }

  void replace(std::string_view suffix, std::string_view with) {
    w_.resize(stem_len(suffix));
    w_.append(with);
  }

  // Replaces the first matching suffix when the remaining stem has m > min_m.
  template <std::size_t N>
  void replace_table(const std::array<std::pair<std::string_view, std::string_view>, N>& table, int min_m) {
    for (const auto& [suffix, with] : table) {
      if (ends(suffix)) {
        if (measure(stem_len(suffix)) > min_m) replace(suffix, with);
        return;
      }
    }
  }

  void step1a() {
    if (ends("sses")) replace("sses", "ss");
    else if (ends("ies")) replace("ies", "i");
    else if (ends("ss")) return;
    else if (ends("s")) replace("s", "");
  }

  void step1b() {
    if (ends("eed")) {
      if (measure(stem_len("eed")) > 0) replace("eed", "ee");
      return;
    }
    std::string_view hit;
    if (ends("ed") && has_vowel(stem_len("ed"))) hit = "ed";
    else if (ends("ing") && has_vowel(stem_len("ing"))) hit = "ing";
    if (hit.empty()) return;
    replace(hit, "");
    if (ends("at") || ends("bl") || ends("iz")) {
      w_.push_back('e');
    } else if (double_consonant(w_.size())) {
      const char c = w_.back();
      if (c != 'l' && c != 's' && c != 'z') w_.pop_back();
    } else if (measure(w_.size()) == 1 && cvc(w_.size())) {
      w_.push_back('e');
    }
  }

  void step1c() {
    if (ends("y") && has_vowel(w_.size() - 1)) w_.back() = 'i';
  }

  void step2() {
    static constexpr std::array<std::pair<std::string_view, std::string_view>, 20> kTable{{
        {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"},   {"anci", "ance"},  {"izer", "ize"},
        {"abli", "able"},   {"alli", "al"},     {"entli", "ent"},   {"eli", "e"},      {"ousli", "ous"},
        {"ization", "ize"}, {"ation", "ate"},   {"ator", "ate"},    {"alism", "al"},   {"iveness", "ive"},
        {"fulness", "ful"}, {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"},  {"biliti", "ble"},
    }};
    // Longest-match semantics: several entries share endings ("tional" inside
    // "ational"), so try them in decreasing length.
    std::pair<std::string_view, std::string_view> best{};
    for (const auto& entry : kTable) {
      if (ends(entry.first) && entry.first.size() > best.first.size()) best = entry;
    }
    if (!best.first.empty() && measure(stem_len(best.first)) > 0) replace(best.first, best.second);
  }

  void step3() {
    static constexpr std::array<std::pair<std::string_view, std::string_view>, 7> kTable{{
        {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"}, {"ical", "ic"}, {"ful", ""}, {"ness", ""},
    }};
    replace_table(kTable, 0);
  }

  void step4() {
    static constexpr std::array<std::string_view, 19> kSuffixes{
        "ement", "ance", "ence", "able", "ible", "ment", "ant", "ent", "ism", "ate",
        "iti",   "ous",  "ive",  "ize",  "al",   "er",   "ic",  "ou",  "ion"};
    std::string_view hit;
    for (auto s : kSuffixes) {
      if (ends(s) && s.size() > hit.size()) hit = s;
    }
    if (hit.empty()) return;
    const std::size_t len = stem_len(hit);
    if (measure(len) <= 1) return;
    if (hit == "ion" && !(len > 0 && (w_[len - 1] == 's' || w_[len - 1] == 't'))) return;
    w_.resize(len);
  }

  void step5() {
    if (ends("e")) {
      const std::size_t len = w_.size() - 1;
      const int m = measure(len);
      if (m > 1 || (m == 1 && !cvc(len))) w_.pop_back();
    }
    if (measure(w_.size()) > 1 && double_consonant(w_.size()) && w_.back() == 'l') w_.pop_back();
  }

  std::string w_;
};

}  // namespace

std::string porter_stem(std::string_view word) { return Stemmer(word).run(); }

}  // namespace avcap
