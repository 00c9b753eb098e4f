// Copyright 2026 The avcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "avcap/metrics.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "avcap/errors.h"
#include "avcap/stemmer.h"
#include "avcap/textproc.h"

namespace avcap {
namespace {

using NgramCounts = std::map<std::string, double>;

NgramCounts count_ngrams(const Words& words, std::size_t n) {
  NgramCounts out;
  if (words.size() < n) return out;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    std::string key = words[i];
    for (std::size_t k = 1; k < n; ++k) {
      key.push_back(' ');
      key += words[i + k];
    }
    out[key] += 1.0;
  }
  return out;
}

std::size_t count_chunks(std::vector<std::pair<std::size_t, std::size_t>> matches) {
  if (matches.empty()) return 0;
  std::sort(matches.begin(), matches.end());
  std::size_t chunks = 1;
  for (std::size_t k = 1; k < matches.size(); ++k) {
    const bool adjacent = matches[k].first == matches[k - 1].first + 1 && matches[k].second == matches[k - 1].second + 1;
    if (!adjacent) ++chunks;
  }
  return chunks;
}

// Kuhn's augmenting-path matching, used only to learn the maximum cardinality.
std::size_t max_matching(const std::vector<std::vector<std::size_t>>& edges, std::size_t right_size) {
  std::vector<int> owner(right_size, -1);
  std::function<bool(std::size_t, std::vector<char>&)> augment = [&](std::size_t i, std::vector<char>& seen) {
    for (auto j : edges[i]) {
      if (seen[j]) continue;
      seen[j] = 1;
      if (owner[j] < 0 || augment(static_cast<std::size_t>(owner[j]), seen)) {
        owner[j] = static_cast<int>(i);
        return true;
      }
    }
    return false;
  };
  std::size_t total = 0;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    std::vector<char> seen(right_size, 0);
    total += augment(i, seen);
  }
  return total;
}

// Among maximum matchings over `edges`, finds one minimizing the chunk count
// of `fixed` plus the new matches.
class ChunkMinimizer {
 public:
  ChunkMinimizer(const std::vector<std::vector<std::size_t>>& edges, std::size_t right_size,
                 const std::vector<std::pair<std::size_t, std::size_t>>& fixed, std::size_t budget)
      : edges_(edges), used_(right_size, 0), fixed_(fixed), budget_(budget) {
    remaining_.assign(edges.size() + 1, 0);
    for (std::size_t i = edges.size(); i-- > 0;) remaining_[i] = remaining_[i + 1] + (edges[i].empty() ? 0 : 1);
  }

  std::vector<std::pair<std::size_t, std::size_t>> run(std::size_t target) {
    target_ = target;
    search(0);
    return best_;
  }

 private:
  void search(std::size_t i) {
    if (leaves_ >= budget_) return;
    if (current_.size() + remaining_[i] < target_) return;
    if (current_.size() == target_) {
      ++leaves_;
      auto all = fixed_;
      all.insert(all.end(), current_.begin(), current_.end());
      const std::size_t chunks = count_chunks(all);
      if (chunks < best_chunks_) {
        best_chunks_ = chunks;
        best_ = current_;
      }
      return;
    }
    if (i == edges_.size()) return;
    for (auto j : edges_[i]) {
      if (used_[j]) continue;
      used_[j] = 1;
      current_.emplace_back(i, j);
      search(i + 1);
      current_.pop_back();
      used_[j] = 0;
    }
    search(i + 1);
  }

  const std::vector<std::vector<std::size_t>>& edges_;
  std::vector<char> used_;
  const std::vector<std::pair<std::size_t, std::size_t>>& fixed_;
  std::size_t budget_;
  std::vector<std::size_t> remaining_;
  std::size_t target_ = 0;
  std::size_t leaves_ = 0;
  std::size_t best_chunks_ = static_cast<std::size_t>(-1);
  std::vector<std::pair<std::size_t, std::size_t>> current_;
  std::vector<std::pair<std::size_t, std::size_t>> best_;
};

std::string format_fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

// --- BLEU --------------------------------------------------------------------

std::pair<std::size_t, std::size_t> clipped_ngram_counts(const Words& candidate, const std::vector<Words>& references,
                                                         std::size_t n) {
  const auto cand = count_ngrams(candidate, n);
  NgramCounts max_ref;
  for (const auto& r : references) {
    for (const auto& [g, c] : count_ngrams(r, n)) max_ref[g] = std::max(max_ref[g], c);
  }
  double clipped = 0.0;
  double total = 0.0;
  for (const auto& [g, c] : cand) {
    total += c;
    auto it = max_ref.find(g);
    if (it != max_ref.end()) clipped += std::min(c, it->second);
  }
  return {static_cast<std::size_t>(clipped), static_cast<std::size_t>(total)};
}

std::size_t closest_reference_length(std::size_t candidate_length, const std::vector<Words>& references) {
  if (references.empty()) throw ContractError("closest_reference_length: no references");
  std::size_t best = references.front().size();
  for (const auto& r : references) {
    const auto d = [&](std::size_t len) {
      return len > candidate_length ? len - candidate_length : candidate_length - len;
    };
    if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
  }
  return best;
}

double bleu4(const std::vector<EvalPair>& pairs, bool smoothing) {
  std::array<double, 4> clipped{}, total{};
  double cand_len = 0.0, ref_len = 0.0;
  for (const auto& p : pairs) {
    if (p.references.empty()) throw ContractError("bleu4: clip '" + p.clip_id + "' has no references");
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto [c, t] = clipped_ngram_counts(p.candidate, p.references, n);
      clipped[n - 1] += static_cast<double>(c);
      total[n - 1] += static_cast<double>(t);
    }
    cand_len += static_cast<double>(p.candidate.size());
    ref_len += static_cast<double>(closest_reference_length(p.candidate.size(), p.references));
  }
  if (cand_len == 0.0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    double num = clipped[n], den = total[n];
    if (smoothing && n > 0) {
      num += 1.0;
      den += 1.0;
    }
    if (num == 0.0 || den == 0.0) return 0.0;
    log_sum += std::log(num / den);
  }
  const double bp = cand_len < ref_len ? std::exp(1.0 - ref_len / cand_len) : 1.0;
  return bp * std::exp(log_sum / 4.0);
}

// --- ROUGE-L -----------------------------------------------------------------

std::size_t lcs_length(const Words& a, const Words& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const Words& candidate, const std::vector<Words>& references, double beta) {
  if (references.empty()) throw ContractError("rouge_l: no references");
  if (candidate.empty()) return 0.0;
  double best = 0.0;
  for (const auto& r : references) {
    if (r.empty()) continue;
    const double l = static_cast<double>(lcs_length(candidate, r));
    if (l == 0.0) continue;
    const double p = l / static_cast<double>(candidate.size());
    const double rec = l / static_cast<double>(r.size());
    const double b2 = beta * beta;
    best = std::max(best, (1.0 + b2) * p * rec / (rec + b2 * p));
  }
  return best;
}

// --- METEOR ------------------------------------------------------------------

void SynonymTable::add_group(const Words& group) {
  for (const auto& w : group) group_of_[w].insert(groups_);
  ++groups_;
}

SynonymTable SynonymTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open synonym table '" + path + "'");
  SynonymTable table;
  std::string line;
  while (std::getline(in, line)) {
    auto words = tokenize(line);
    if (words.size() >= 2) table.add_group(words);
  }
  return table;
}

bool SynonymTable::synonyms(const std::string& a, const std::string& b) const {
  auto ia = group_of_.find(a);
  auto ib = group_of_.find(b);
  if (ia == group_of_.end() || ib == group_of_.end()) return false;
  for (auto g : ia->second) {
    if (ib->second.count(g)) return true;
  }
  return false;
}

MeteorAlignment meteor_align(const Words& candidate, const Words& reference, const MeteorOptions& options) {
  std::vector<std::function<bool(std::size_t, std::size_t)>> stages;
  stages.emplace_back([&](std::size_t i, std::size_t j) { return candidate[i] == reference[j]; });
  std::vector<std::string> cand_stems, ref_stems;
  if (options.stemming) {
    for (const auto& w : candidate) cand_stems.push_back(porter_stem(w));
    for (const auto& w : reference) ref_stems.push_back(porter_stem(w));
    stages.emplace_back([&](std::size_t i, std::size_t j) { return cand_stems[i] == ref_stems[j]; });
  }
  if (options.synonyms != nullptr && !options.synonyms->empty()) {
    stages.emplace_back(
        [&](std::size_t i, std::size_t j) { return options.synonyms->synonyms(candidate[i], reference[j]); });
  }

  std::vector<char> cand_used(candidate.size(), 0), ref_used(reference.size(), 0);
  MeteorAlignment out;
  for (const auto& matches_at : stages) {
    std::vector<std::vector<std::size_t>> edges(candidate.size());
    for (std::size_t i = 0; i < candidate.size(); ++i) {
      if (cand_used[i]) continue;
      for (std::size_t j = 0; j < reference.size(); ++j) {
        if (!ref_used[j] && matches_at(i, j)) edges[i].push_back(j);
      }
    }
    const std::size_t target = max_matching(edges, reference.size());
    if (target == 0) continue;
    ChunkMinimizer search(edges, reference.size(), out.matches, options.search_budget);
    for (const auto& [i, j] : search.run(target)) {
      cand_used[i] = 1;
      ref_used[j] = 1;
      out.matches.emplace_back(i, j);
    }
  }
  std::sort(out.matches.begin(), out.matches.end());
  out.chunks = count_chunks(out.matches);
  return out;
}

double meteor_score(const Words& candidate, const Words& reference, const MeteorOptions& options) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const auto a = meteor_align(candidate, reference, options);
  const double m = static_cast<double>(a.matches.size());
  if (m == 0.0) return 0.0;
  const double p = m / static_cast<double>(candidate.size());
  const double r = m / static_cast<double>(reference.size());
  const double fmean = 10.0 * p * r / (r + 9.0 * p);
  const double penalty = 0.5 * std::pow(static_cast<double>(a.chunks) / m, 3.0);
  return fmean * (1.0 - penalty);
}

double meteor(const Words& candidate, const std::vector<Words>& references, const MeteorOptions& options) {
  if (references.empty()) throw ContractError("meteor: no references");
  double best = 0.0;
  for (const auto& r : references) best = std::max(best, meteor_score(candidate, r, options));
  return best;
}

// --- CIDEr-D -----------------------------------------------------------------

std::vector<double> cider_d(const std::vector<EvalPair>& pairs, const CiderOptions& options) {
  if (pairs.size() < 2) throw ContractError("cider_d: needs at least two clips for document frequencies");
  const std::size_t max_n = options.max_n;

  // df over clips: an n-gram counts once per clip however many references hold it.
  std::vector<std::map<std::string, double>> df(max_n);
  for (const auto& p : pairs) {
    if (p.references.empty()) throw ContractError("cider_d: clip '" + p.clip_id + "' has no references");
    for (std::size_t n = 1; n <= max_n; ++n) {
      std::set<std::string> seen;
      for (const auto& r : p.references) {
        for (const auto& [g, c] : count_ngrams(r, n)) seen.insert(g);
      }
      for (const auto& g : seen) df[n - 1][g] += 1.0;
    }
  }
  const double log_docs = std::log(static_cast<double>(pairs.size()));

  struct Vec {
    std::vector<NgramCounts> weights;
    std::vector<double> norm;
    double length;
  };
  const auto vectorize = [&](const Words& words) {
    Vec v{std::vector<NgramCounts>(max_n), std::vector<double>(max_n, 0.0), static_cast<double>(words.size())};
    for (std::size_t n = 1; n <= max_n; ++n) {
      for (const auto& [g, tf] : count_ngrams(words, n)) {
        auto it = df[n - 1].find(g);
        const double dfv = it == df[n - 1].end() ? 0.0 : it->second;
        const double w = tf * (log_docs - std::log(std::max(1.0, dfv)));
        v.weights[n - 1][g] = w;
        v.norm[n - 1] += w * w;
      }
      v.norm[n - 1] = std::sqrt(v.norm[n - 1]);
    }
    return v;
  };

  std::vector<double> scores;
  scores.reserve(pairs.size());
  for (const auto& p : pairs) {
    const Vec cand = vectorize(p.candidate);
    auto refs = p.references;
    std::sort(refs.begin(), refs.end());
    std::vector<double> per_n(max_n, 0.0);
    for (const auto& r : refs) {
      const Vec ref = vectorize(r);
      const double delta = cand.length - ref.length;
      const double penalty = std::exp(-(delta * delta) / (2.0 * options.sigma * options.sigma));
      for (std::size_t n = 0; n < max_n; ++n) {
        double dot = 0.0;
        for (const auto& [g, wc] : cand.weights[n]) {
          auto it = ref.weights[n].find(g);
          if (it != ref.weights[n].end()) dot += std::min(wc, it->second) * it->second;
        }
        if (cand.norm[n] != 0.0 && ref.norm[n] != 0.0) dot /= cand.norm[n] * ref.norm[n];
        per_n[n] += dot * penalty;
      }
    }
    double mean = 0.0;
    for (double v : per_n) mean += v;
    mean /= static_cast<double>(max_n);
    scores.push_back(10.0 * mean / static_cast<double>(refs.size()));
  }
  return scores;
}

// --- SPIDEr ------------------------------------------------------------------

std::optional<double> spider(std::optional<double> cider, std::optional<double> spice) {
  if (!cider || !spice) return std::nullopt;
  return (*cider + *spice) / 2.0;
}

// --- Reports -----------------------------------------------------------------

MetricReport evaluate_pairs(std::vector<EvalPair> pairs, const EvalOptions& options) {
  if (pairs.empty()) throw ContractError("evaluate: empty corpus");
  for (auto& p : pairs) std::sort(p.references.begin(), p.references.end());
  std::sort(pairs.begin(), pairs.end(), [](const EvalPair& a, const EvalPair& b) { return a.clip_id < b.clip_id; });
  for (std::size_t i = 1; i < pairs.size(); ++i) {
    if (pairs[i].clip_id == pairs[i - 1].clip_id) throw ContractError("evaluate: duplicate clip '" + pairs[i].clip_id + "'");
  }

  MetricReport rep;
  bool any_words = false;
  for (const auto& p : pairs) any_words = any_words || !p.candidate.empty();
  if (!any_words) rep.warnings.push_back("all candidates are empty; BLEU-4 reported as 0");
  rep.bleu4 = bleu4(pairs, options.bleu_smoothing);

  const auto cider = cider_d(pairs, options.cider);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    SampleScores s;
    s.clip_id = p.clip_id;
    s.meteor = meteor(p.candidate, p.references, options.meteor);
    s.rouge_l = rouge_l(p.candidate, p.references);
    s.cider_d = cider[i];
    rep.meteor += s.meteor;
    rep.rouge_l += s.rouge_l;
    rep.cider_d += s.cider_d;
    rep.samples.push_back(std::move(s));
  }
  const double n = static_cast<double>(pairs.size());
  rep.meteor /= n;
  rep.rouge_l /= n;
  rep.cider_d /= n;

  if (!options.spice.empty()) {
    double total = 0.0;
    bool complete = true;
    for (const auto& p : pairs) {
      auto it = options.spice.find(p.clip_id);
      if (it == options.spice.end()) {
        complete = false;
        rep.warnings.push_back("no SPICE value for clip '" + p.clip_id + "'; SPICE and SPIDEr omitted");
        break;
      }
      total += it->second;
    }
    if (complete) {
      rep.spice = total / n;
      rep.spider = spider(rep.cider_d, rep.spice);
    }
  }
  return rep;
}

MetricReport evaluate_corpus(const std::map<std::string, std::string>& candidates,
                             const std::vector<ManifestRecord>& records, const EvalOptions& options) {
  std::vector<EvalPair> pairs;
  for (const auto& r : records) {
    auto it = candidates.find(r.clip_id);
    if (it == candidates.end()) throw ContractError("evaluate: no candidate for clip '" + r.clip_id + "'");
    EvalPair p;
    p.clip_id = r.clip_id;
    p.candidate = tokenize(it->second);
    for (const auto& c : r.captions) p.references.push_back(tokenize(c));
    if (p.references.empty()) throw ContractError("evaluate: clip '" + r.clip_id + "' has no reference captions");
    pairs.push_back(std::move(p));
  }
  return evaluate_pairs(std::move(pairs), options);
}

nlohmann::json report_to_json(const MetricReport& report, const EvalOptions& options) {
  nlohmann::json corpus{{"bleu4", report.bleu4},
                        {"meteor", report.meteor},
                        {"rouge_l", report.rouge_l},
                        {"cider_d", report.cider_d}};
  if (report.spice) corpus["spice"] = *report.spice;
  if (report.spider) corpus["spider"] = *report.spider;
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : report.samples) {
    samples.push_back({{"clip_id", s.clip_id}, {"meteor", s.meteor}, {"rouge_l", s.rouge_l}, {"cider_d", s.cider_d}});
  }
  nlohmann::json variants{
      {"bleu4", std::string("corpus, closest reference length, ") +
                    (options.bleu_smoothing ? "add-one smoothing for n>1" : "no smoothing")},
      {"meteor", std::string("lexical: exact") + (options.meteor.stemming ? "+porter-stem" : "") +
                     (options.meteor.synonyms && !options.meteor.synonyms->empty() ? "+synonym-table" : "") +
                     ", Fmean=10PR/(R+9P), penalty=0.5(chunks/m)^3"},
      {"rouge_l", "LCS F-measure, beta=1.2, max over references"},
      {"cider_d", "idf=log(N/max(1,df)), clipped, sigma=" + format_fixed(options.cider.sigma, 1) + ", x10"},
  };
  return nlohmann::json{{"variants", variants},
                        {"corpus", corpus},
                        {"samples", samples},
                        {"warnings", report.warnings}};
}

std::string report_csv_header() { return "bleu4,meteor,rouge_l,cider_d,spice,spider"; }

std::string report_csv_row(const MetricReport& report) {
  const auto opt = [](const std::optional<double>& v) { return v ? format_fixed(*v, 6) : std::string(); };
  return format_fixed(report.bleu4, 6) + "," + format_fixed(report.meteor, 6) + "," + format_fixed(report.rouge_l, 6) +
         "," + format_fixed(report.cider_d, 6) + "," + opt(report.spice) + "," + opt(report.spider);
}

std::map<std::string, std::string> read_candidates(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open candidates file '" + path + "'");
  std::map<std::string, std::string> out;
  std::string line;
  std::uint64_t offset = 0;
  while (std::getline(in, line)) {
    if (!line.empty()) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
        auto id = j.at("clip_id").get<std::string>();
        if (!out.emplace(id, j.at("caption").get<std::string>()).second) {
          throw FormatError("duplicate candidate for clip '" + id + "'", offset);
        }
      } catch (const nlohmann::json::exception& e) {
        throw FormatError("candidates '" + path + "': " + e.what(), offset);
      }
    }
    offset += line.size() + 1;
  }
  return out;
}

void write_candidates(const std::string& path, const std::map<std::string, std::string>& candidates) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write candidates file '" + path + "'");
  for (const auto& [id, caption] : candidates) out << nlohmann::json{{"clip_id", id}, {"caption", caption}}.dump() << '\n';
}

std::map<std::string, double> read_spice(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open SPICE file '" + path + "'");
  std::map<std::string, double> out;
  std::string line;
  std::uint64_t offset = 0;
  while (std::getline(in, line)) {
    if (!line.empty()) {
      try {
        auto j = nlohmann::json::parse(line);
        out[j.at("clip_id").get<std::string>()] = j.at("spice").get<double>();
      } catch (const nlohmann::json::exception& e) {
        throw FormatError("SPICE file '" + path + "': " + e.what(), offset);
      }
    }
    offset += line.size() + 1;
  }
  return out;
}

}  // namespace avcap
