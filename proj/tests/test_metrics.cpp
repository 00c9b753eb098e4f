// Copyright 2026 The avcap Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "avcap/errors.h"
#include "avcap/metrics.h"
#include "avcap/stemmer.h"
#include "avcap/textproc.h"

using namespace avcap;

namespace {

Words w(const std::string& s) { return tokenize(s); }

EvalPair pair(const std::string& id, const std::string& cand, const std::vector<std::string>& refs) {
  EvalPair p{id, w(cand), {}};
  for (const auto& r : refs) p.references.push_back(w(r));
  return p;
}

// Independent CIDEr-D: straight from the definition, maps of n-gram strings.
std::vector<double> cider_oracle(const std::vector<EvalPair>& pairs, std::size_t max_n, double sigma) {
  using Counts = std::map<std::string, double>;
  const auto grams = [](const Words& s, std::size_t n) {
    Counts c;
    for (std::size_t i = 0; i + n <= s.size(); ++i) {
      std::string key;
      for (std::size_t k = 0; k < n; ++k) key += s[i + k] + " ";
      c[key] += 1.0;
    }
    return c;
  };
  const double n_docs = static_cast<double>(pairs.size());
  std::vector<double> out(pairs.size(), 0.0);
  for (std::size_t n = 1; n <= max_n; ++n) {
    std::map<std::string, double> df;
    for (const auto& p : pairs) {
      std::map<std::string, bool> seen;
      for (const auto& r : p.references) {
        for (const auto& [g, c] : grams(r, n)) seen[g] = true;
      }
      for (const auto& [g, b] : seen) df[g] += 1.0;
    }
    const auto vec = [&](const Words& s) {
      Counts v = grams(s, n);
      for (auto& [g, c] : v) c *= std::log(n_docs / std::max(1.0, df.count(g) ? df[g] : 0.0));
      return v;
    };
    const auto norm = [](const Counts& v) {
      double s = 0.0;
      for (const auto& [g, x] : v) s += x * x;
      return std::sqrt(s);
    };
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const Counts vc = vec(pairs[i].candidate);
      double acc = 0.0;
      for (const auto& r : pairs[i].references) {
        const Counts vr = vec(r);
        double dot = 0.0;
        for (const auto& [g, x] : vc) {
          auto it = vr.find(g);
          if (it != vr.end()) dot += std::min(x, it->second) * it->second;
        }
        const double nc = norm(vc), nr = norm(vr);
        double sim = nc > 0 && nr > 0 ? dot / (nc * nr) : 0.0;
        const double delta = static_cast<double>(pairs[i].candidate.size()) - static_cast<double>(r.size());
        sim *= std::exp(-delta * delta / (2.0 * sigma * sigma));
        acc += sim;
      }
      out[i] += 10.0 * acc / static_cast<double>(pairs[i].references.size()) / static_cast<double>(max_n);
    }
  }
  return out;
}

std::vector<EvalPair> random_corpus(std::uint64_t seed, std::size_t clips) {
  const std::vector<std::string> lexicon{"a", "dog", "cat", "barks", "runs", "the", "red", "car", "then", "loud"};
  std::mt19937_64 rng(seed);
  const auto sentence = [&] {
    Words s;
    const auto len = std::uniform_int_distribution<std::size_t>(1, 9)(rng);
    for (std::size_t i = 0; i < len; ++i) s.push_back(lexicon[std::uniform_int_distribution<std::size_t>(0, 9)(rng)]);
    return s;
  };
  std::vector<EvalPair> out;
  for (std::size_t i = 0; i < clips; ++i) {
    EvalPair p{"clip" + std::to_string(i), sentence(), {}};
    for (int r = 0; r < 5; ++r) p.references.push_back(sentence());
    out.push_back(p);
  }
  return out;
}

}  // namespace

TEST_CASE("BLEU: clipped unigram precision and brevity penalty") {
  const auto counts = clipped_ngram_counts(w("the the the the the the the"), {w("the cat is on the mat")}, 1);
  CHECK(counts.first == 2);
  CHECK(counts.second == 7);
  CHECK(bleu4({pair("x", "the the the the the the the", {"the cat is on the mat"})}) == 0.0);

  CHECK(bleu4({pair("x", "a b c d", {"a b c d e f g h"})}) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(bleu4({pair("x", "a dog barks at the cat", {"the cat", "a dog barks at the cat"})}) == doctest::Approx(1.0));
  CHECK(closest_reference_length(5, {w("a b c d"), w("a b c d e f")}) == 4);
  CHECK(bleu4({pair("x", "", {"a b"})}) == 0.0);
}

TEST_CASE("ROUGE-L") {
  CHECK(lcs_length(w("a b c d"), w("a c d b")) == 3);
  CHECK(rouge_l(w("a b c d"), {w("a c d b")}) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(rouge_l(w("a dog barks"), {w("a dog barks")}) == doctest::Approx(1.0));
  CHECK(rouge_l(w("x y"), {w("a b")}) == 0.0);
  CHECK(rouge_l({}, {w("a b")}) == 0.0);
  CHECK(rouge_l(w("a b c d"), {w("x"), w("a c d b")}) == doctest::Approx(0.75));
}

TEST_CASE("LCS agrees with exhaustive subsequence enumeration") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    Words a, b;
    const auto la = std::uniform_int_distribution<int>(0, 8)(rng), lb = std::uniform_int_distribution<int>(0, 8)(rng);
    for (int i = 0; i < la; ++i) a.push_back(std::string(1, static_cast<char>('a' + rng() % 3)));
    for (int i = 0; i < lb; ++i) b.push_back(std::string(1, static_cast<char>('a' + rng() % 3)));
    std::size_t best = 0;
    for (std::uint32_t mask = 0; mask < (1u << a.size()); ++mask) {
      Words sub;
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (mask & (1u << i)) sub.push_back(a[i]);
      }
      std::size_t j = 0;
      for (std::size_t i = 0; i < b.size() && j < sub.size(); ++i) j += b[i] == sub[j];
      if (j == sub.size()) best = std::max(best, sub.size());
    }
    CHECK(lcs_length(a, b) == best);
  }
}

TEST_CASE("METEOR") {
  CHECK(meteor_score(w("the cat"), w("the cat")) == doctest::Approx(0.9375).epsilon(1e-12));
  CHECK(meteor_score(w("a b"), w("c d")) == 0.0);
  const auto stemmed = meteor_align(w("cats"), w("cat"));
  CHECK(stemmed.matches.size() == 1);
  MeteorOptions exact_only;
  exact_only.stemming = false;
  CHECK(meteor_align(w("cats"), w("cat"), exact_only).matches.empty());

  // "a b c" vs "c a b": three matches, two chunks.
  const auto al = meteor_align(w("a b c"), w("c a b"));
  CHECK(al.matches.size() == 3);
  CHECK(al.chunks == 2);
  const double fmean = 1.0, penalty = 0.5 * std::pow(2.0 / 3.0, 3);
  CHECK(meteor_score(w("a b c"), w("c a b")) == doctest::Approx(fmean * (1.0 - penalty)).epsilon(1e-12));

  // Chunk minimization: "the" could align to either occurrence.
  const auto tie = meteor_align(w("the cat the"), w("the cat"));
  CHECK(tie.chunks == 1);

  SynonymTable syn;
  syn.add_group({"automobile", "car"});
  MeteorOptions with_syn;
  with_syn.synonyms = &syn;
  CHECK(meteor_align(w("a car"), w("a automobile"), with_syn).matches.size() == 2);
  CHECK(meteor_align(w("a car"), w("a automobile")).matches.size() == 1);
}

TEST_CASE("Porter stemmer on a reference word list") {
  const std::vector<std::pair<std::string, std::string>> cases{
      {"caresses", "caress"},   {"ponies", "poni"},         {"ties", "ti"},           {"cats", "cat"},
      {"feed", "feed"},         {"agreed", "agre"},         {"plastered", "plaster"}, {"motoring", "motor"},
      {"sing", "sing"},         {"conflated", "conflat"},   {"troubled", "troubl"},   {"sized", "size"},
      {"hopping", "hop"},       {"tanned", "tan"},          {"falling", "fall"},      {"hissing", "hiss"},
      {"fizzed", "fizz"},       {"failing", "fail"},        {"filing", "file"},       {"happy", "happi"},
      {"sky", "sky"},           {"relational", "relat"},    {"conditional", "condit"}, {"rational", "ration"},
      {"generalization", "gener"}, {"oscillators", "oscil"}, {"generously", "gener"},  {"dogs", "dog"},
      {"barking", "bark"},      {"running", "run"},         {"a", "a"},               {"is", "is"}};
  for (const auto& [word, stem] : cases) {
    CAPTURE(word);
    CHECK(porter_stem(word) == stem);
  }
}

TEST_CASE("CIDEr-D: identical-candidate construction scores 10") {
  std::vector<EvalPair> pairs{pair("a", "a dog barks loudly", {"a dog barks loudly"}),
                              pair("b", "the red car passes by", {"the red car passes by"}),
                              pair("c", "birds chirp in trees", {"birds chirp in trees"})};
  for (double s : cider_d(pairs)) CHECK(s == doctest::Approx(10.0).epsilon(1e-12));
  std::vector<EvalPair> disjoint{pair("a", "x y z", {"a b c"}), pair("b", "u v", {"d e"})};
  for (double s : cider_d(disjoint)) CHECK(s == 0.0);
  CHECK_THROWS_AS(cider_d({pair("a", "a b", {"a b"})}), ContractError);
}

TEST_CASE("CIDEr-D: 3-clip unigram hand oracle") {
  // Every unigram occurs in one clip's references or none, so every idf is ln 3.
  // a: vectors {a,b} vs {a,c} -> cosine 1/2, equal lengths.
  // b, c: {b} vs {b,d} -> cosine 1/sqrt(2), length gap 1 -> exp(-1/72).
  const std::vector<EvalPair> pairs{pair("a", "a b", {"a c"}), pair("b", "b", {"b d"}), pair("c", "e", {"e f"})};
  CiderOptions unigram;
  unigram.max_n = 1;
  const auto s = cider_d(pairs, unigram);
  CHECK(s[0] == doctest::Approx(5.0).epsilon(1e-6));
  CHECK(s[1] == doctest::Approx(10.0 / std::sqrt(2.0) * std::exp(-1.0 / 72.0)).epsilon(1e-6));
  CHECK(s[2] == doctest::Approx(s[1]).epsilon(1e-12));
}

TEST_CASE("CIDEr-D agrees with an independent implementation on random corpora") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto pairs = random_corpus(seed, 6);
    const auto got = cider_d(pairs);
    const auto want = cider_oracle(pairs, 4, 6.0);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-9));
  }
}

TEST_CASE("SPIDEr averages CIDEr and SPICE and is absent without SPICE") {
  CHECK(*spider(0.6532, 0.1641) == doctest::Approx(0.40865).epsilon(1e-6));
  CHECK(*spider(0.3, 0.3) == doctest::Approx(0.3));
  CHECK_FALSE(spider(0.5, std::nullopt).has_value());
  const auto report = evaluate_pairs(random_corpus(3, 4));
  CHECK_FALSE(report.spider.has_value());
  CHECK_FALSE(report.spice.has_value());
}

TEST_CASE("corpus metrics: ranges, order invariance, purity") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto pairs = random_corpus(seed, 8);
    const MetricReport a = evaluate_pairs(pairs);
    CHECK(a.bleu4 >= 0.0);
    CHECK(a.bleu4 <= 1.0);
    CHECK(a.meteor >= 0.0);
    CHECK(a.meteor <= 1.0);
    CHECK(a.rouge_l >= 0.0);
    CHECK(a.rouge_l <= 1.0);
    CHECK(a.cider_d >= 0.0);
    CHECK(a.cider_d <= 10.0);
    std::mt19937_64 rng(seed);
    std::shuffle(pairs.begin(), pairs.end(), rng);
    for (auto& p : pairs) std::shuffle(p.references.begin(), p.references.end(), rng);
    const MetricReport b = evaluate_pairs(pairs);
    CHECK(report_to_json(a).dump() == report_to_json(b).dump());
    CHECK(report_to_json(evaluate_pairs(pairs)).dump() == report_to_json(b).dump());
  }
}

TEST_CASE("evaluate_corpus: copied references score 1 and missing candidates are named") {
  std::vector<ManifestRecord> records;
  std::map<std::string, std::string> cands;
  const std::vector<std::string> caps{"a dog barks then a cat meows", "the red car passes by quickly",
                                      "birds chirp loudly in the tall trees"};
  for (std::size_t i = 0; i < caps.size(); ++i) {
    const std::string id = "eval_" + std::to_string(i);
    records.push_back({id, "", "", {caps[i], "something else entirely here"}, Split::kEval});
    cands[id] = caps[i];
  }
  const MetricReport r = evaluate_corpus(cands, records);
  CHECK(r.bleu4 == doctest::Approx(1.0));
  CHECK(r.rouge_l == doctest::Approx(1.0));
  EvalOptions with_spice;
  with_spice.spice = {{"eval_0", 0.2}, {"eval_1", 0.4}, {"eval_2", 0.3}};
  const MetricReport rs = evaluate_corpus(cands, records, with_spice);
  REQUIRE(rs.spider.has_value());
  CHECK(*rs.spice == doctest::Approx(0.3));
  CHECK(*rs.spider == doctest::Approx((rs.cider_d + 0.3) / 2.0));

  cands.erase("eval_1");
  try {
    evaluate_corpus(cands, records);
    FAIL("expected ContractError");
  } catch (const ContractError& e) {
    CHECK(std::string(e.what()).find("eval_1") != std::string::npos);
  }
}

TEST_CASE("report CSV follows the table column order") {
  CHECK(report_csv_header() == "bleu4,meteor,rouge_l,cider_d,spice,spider");
  MetricReport r;
  r.bleu4 = 0.5;
  CHECK(report_csv_row(r).rfind("0.5", 0) == 0);
}
