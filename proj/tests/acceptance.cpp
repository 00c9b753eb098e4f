// Copyright 2026 The avcap Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance runner: one PASS/FAIL line per criterion. Tolerances are fixed
// here; `--only N` runs a single criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "avcap/harness.h"

using namespace avcap;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kGradRelTol = 1e-4;
constexpr double kGradBudgetSeconds = 120.0;
constexpr double kAffinityTol = 1e-9;
constexpr double kMetricTol = 1e-6;
constexpr double kOverfitLoss = 0.1;
constexpr double kOverfitBleu = 0.9;
constexpr double kOverfitBudgetSeconds = 600.0;
constexpr double kOverfitDecodeLambda = 0.5;
constexpr double kOracleScoreTol = 1e-9;


struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << x;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor random_features(std::size_t frames, std::size_t dim, std::mt19937_64& rng) {
  return Tensor::uniform({frames, dim}, -1.0, 1.0, rng);
}

ModelConfig tiny_model(std::size_t vocab) {
  ModelConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_layers = 2;
  c.d_ff = 32;
  c.dropout = 0.0;
  c.vocab_size = vocab;
  c.d_audio_in = 6;
  c.d_secondary_in = 5;
  return c;
}

// A two-item padded batch with caption length 4.
struct ToyBatch {
  Tensor audio, secondary;
  std::vector<int> inputs{1, 4, 5, 6, 1, 7, 8, 0};
  std::vector<int> targets{4, 5, 6, 2, 7, 8, 2, 0};

  explicit ToyBatch(std::mt19937_64& rng)
      : audio(concat_rows({random_features(5, 6, rng), random_features(3, 6, rng), Tensor::zeros({2, 6})})),
        secondary(concat_rows({random_features(4, 5, rng), Tensor::zeros({2, 5}), random_features(6, 5, rng)})) {}

  Tensor logits(const MultiEncoderTransformer& m, MixingWeight mix, const Tensor& a, const Tensor& s) const {
    const auto ea = m.encode_batch(a, 5, {5, 3}, Stream::kAudio);
    const auto es = m.encode_batch(s, 6, {4, 6}, Stream::kSecondary);
    return m.decode(inputs, 4, ea, es, mix, false, nullptr);
  }
  Tensor loss(const MultiEncoderTransformer& m, MixingWeight mix) const {
    return cross_entropy(logits(m, mix, audio, secondary), targets, Vocabulary::kPad);
  }
};

std::map<std::string, std::vector<double>> analytic_grads(MultiEncoderTransformer& m, const ToyBatch& b,
                                                          MixingWeight mix) {
  m.zero_grad();
  Tape tape;
  {
    TapeScope scope(tape);
    backward(b.loss(m, mix), tape);
  }
  std::map<std::string, std::vector<double>> out;
  for (const auto& p : m.named_parameters()) {
    out[p.name] = p.tensor.has_grad() ? std::vector<double>(p.tensor.grad().begin(), p.tensor.grad().end())
                                      : std::vector<double>(p.tensor.numel(), 0.0);
  }
  m.zero_grad();
  return out;
}

// Ridders' extrapolation of central differences over a shrinking step; the
// estimate with the smallest error estimate wins. The whole table is built
// (no early exit) so steps straddling a ReLU kink, which disagree with their
// neighbours, lose to the consistent small-step columns. Each column's error
// is floored by its roundoff, since a quantized loss makes adjacent tiny
// steps agree exactly and would otherwise look error-free.
double ridders_derivative(const std::function<double(double)>& f, double x, double h) {
  constexpr int kSteps = 12;
  constexpr double kShrink = 2.0, kShrink2 = kShrink * kShrink;
  constexpr double kRoundoff = 4.0 * std::numeric_limits<double>::epsilon();
  double table[kSteps][kSteps];
  double noise[kSteps];
  const auto column = [&](int i) {
    const double up = f(x + h), down = f(x - h);
    table[0][i] = (up - down) / (2.0 * h);
    noise[i] = kRoundoff * (std::abs(up) + std::abs(down)) / (2.0 * h);
  };
  column(0);
  double best = table[0][0], err = std::numeric_limits<double>::infinity();
  for (int i = 1; i < kSteps; ++i) {
    h /= kShrink;
    column(i);
    double fac = kShrink2;
    for (int j = 1; j <= i; ++j) {
      table[j][i] = (table[j - 1][i] * fac - table[j - 1][i - 1]) / (fac - 1.0);
      fac *= kShrink2;
      const double e = std::max({std::abs(table[j][i] - table[j - 1][i]),
                                 std::abs(table[j][i] - table[j - 1][i - 1]), noise[i]});
      if (e < err) {
        err = e;
        best = table[j][i];
      }
    }
  }
  return best;
}

Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2026);
  MultiEncoderTransformer model(tiny_model(11), 7);
  const ToyBatch batch(rng);
  const MixingWeight mix(0.4);
  const auto grads = analytic_grads(model, batch, mix);

  double worst = 0.0;
  std::string worst_group;
  double worst_analytic = 0.0, worst_numeric = 0.0;
  std::size_t checked = 0, groups = 0, cross_groups = 0;
  for (auto& p : model.named_parameters()) {
    ++groups;
    if (p.name.find("cross_audio") != std::string::npos || p.name.find("cross_secondary") != std::string::npos) {
      ++cross_groups;
    }
    auto values = p.tensor.values();
    const auto& g = grads.at(p.name);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double v = values[i];
      const auto f = [&](double x) {
        values[i] = x;
        return batch.loss(model, mix).item();
      };
      const double numeric = ridders_derivative(f, v, 1e-2);
      values[i] = v;
      const double rel = std::abs(g[i] - numeric) / std::max({std::abs(g[i]), std::abs(numeric), 1e-8});
      if (rel > worst) {
        worst = rel;
        worst_group = p.name;
        worst_analytic = g[i];
        worst_numeric = numeric;
      }
      ++checked;
    }
  }
  const double secs = seconds_since(t0);
  // Both cross-attention sets: 4 projections × (weight, bias) × 2 streams × layers.
  const bool covered = cross_groups == 16 * tiny_model(11).n_layers;
  return {worst < kGradRelTol && secs < kGradBudgetSeconds && covered,
          "max relative error " + fmt(worst, 3) + " (" + worst_group + ": analytic " + fmt(worst_analytic, 6) +
              ", numeric " + fmt(worst_numeric, 6) + ") over " + std::to_string(checked) +
              " parameters in " + std::to_string(groups) + " groups, " + fmt(secs, 3) + " s"};
}

Outcome mixing_collapse() {
  std::mt19937_64 rng(11);
  MultiEncoderTransformer model(tiny_model(11), 3);
  const ToyBatch batch(rng);
  bool logits_ok = true, grads_ok = true;
  std::size_t unused_groups = 0;
  for (const double lambda : {1.0, 0.0}) {
    const MixingWeight mix(lambda);
    const bool audio_only = lambda == 1.0;
    const Tensor real = batch.logits(model, mix, batch.audio, batch.secondary);
    const Tensor zeroed = audio_only ? batch.logits(model, mix, batch.audio, Tensor::zeros(batch.secondary.shape()))
                                     : batch.logits(model, mix, Tensor::zeros(batch.audio.shape()), batch.secondary);
    logits_ok = logits_ok && std::memcmp(real.values().data(), zeroed.values().data(),
                                         real.numel() * sizeof(double)) == 0;
    const std::string unused = audio_only ? "secondary" : "audio";
    for (const auto& [name, g] : analytic_grads(model, batch, mix)) {
      if (name.find("cross_" + unused) == std::string::npos && name.find("encoder_" + unused) == std::string::npos) {
        continue;
      }
      ++unused_groups;
      grads_ok = grads_ok && std::all_of(g.begin(), g.end(), [](double x) { return x == 0.0; });
    }
  }
  return {logits_ok && grads_ok && unused_groups > 0,
          std::string("logits bit-identical: ") + (logits_ok ? "yes" : "no") + "; unused-stream gradients exactly 0 in " +
              std::to_string(unused_groups) + " groups: " + (grads_ok ? "yes" : "no")};
}

Outcome lambda_affinity() {
  std::mt19937_64 rng(5);
  ModelConfig c = tiny_model(11);
  c.n_layers = 3;
  MultiEncoderTransformer model(c, 9);
  const Tensor ha = model.encode_stream(random_features(7, 6, rng), Stream::kAudio);
  const Tensor hs = model.encode_stream(random_features(5, 5, rng), Stream::kSecondary);
  double worst = 0.0;
  for (const auto& layer : model.layers()) {
    const Tensor x = random_features(4, c.d_model, rng);
    const Tensor o0 = model.dual_cross_attention(x, ha, hs, MixingWeight(0.0), layer);
    const Tensor o1 = model.dual_cross_attention(x, ha, hs, MixingWeight(1.0), layer);
    const Tensor oh = model.dual_cross_attention(x, ha, hs, MixingWeight(0.5), layer);
    for (std::size_t i = 0; i < oh.numel(); ++i) {
      worst = std::max(worst, std::abs(oh.values()[i] - 0.5 * (o0.values()[i] + o1.values()[i])));
    }
  }
  return {worst < kAffinityTol, "max |out(0.5) - (out(0)+out(1))/2| = " + fmt(worst, 3) + " over " +
                                    std::to_string(c.n_layers) + " layers"};
}

Outcome beam_oracle() {
  // 4 reserved ids + 2 words; decoding admits eos and the two words.
  const std::size_t vocab = Vocabulary::kReserved + 2;
  const std::vector<int> words{4, 5};
  std::size_t exact = 0, greedy_equal = 0;
  std::mt19937_64 rng(404);
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    MultiEncoderTransformer model(tiny_model(vocab), seed);
    const Tensor ha = model.encode_stream(random_features(5, 6, rng), Stream::kAudio);
    const Tensor hs = model.encode_stream(random_features(5, 5, rng), Stream::kSecondary);
    const MixingWeight mix(std::uniform_real_distribution<double>(0.0, 1.0)(rng));
    const EncoderMemory mem = model.precompute_memory(ha, hs);

    DecodeConfig cfg;
    cfg.beam_width = 27;
    cfg.max_depth = 3;
    const BeamHypothesis beam = beam_search(model, mem, mix, cfg);

    // Exhaustive enumeration scored by the uncached decoder.
    std::vector<int> best_tokens;
    double best_score = -std::numeric_limits<double>::infinity();
    const auto score = [&](const std::vector<int>& body, bool with_eos) {
      std::vector<int> input{Vocabulary::kSos};
      input.insert(input.end(), body.begin(), body.end());
      std::vector<int> target = body;
      if (with_eos) target.push_back(Vocabulary::kEos);
      input.resize(target.size());
      const Tensor lp = log_softmax(model.decoder_forward(input, ha, hs, mix, false));
      double cum = 0.0;
      for (std::size_t t = 0; t < target.size(); ++t) cum += lp.at(t, static_cast<std::size_t>(target[t]));
      const double s = body.empty() ? -std::numeric_limits<double>::infinity() : cum / static_cast<double>(body.size());
      if (s > best_score) {
        best_score = s;
        best_tokens = body;
      }
    };
    std::function<void(std::vector<int>&)> walk = [&](std::vector<int>& body) {
      if (body.size() == cfg.max_depth) {
        score(body, false);
        return;
      }
      score(body, true);
      for (int w : words) {
        body.push_back(w);
        walk(body);
        body.pop_back();
      }
    };
    std::vector<int> root;
    walk(root);
    exact += beam.tokens == best_tokens && std::abs(normalized_score(beam, 1.0) - best_score) < kOracleScoreTol;

    cfg.beam_width = 1;
    const BeamHypothesis narrow = beam_search(model, mem, mix, cfg);
    TransformerStepModel step(model, mem, mix);
    greedy_equal += narrow.tokens == greedy_decode(step, cfg.max_depth).tokens;
  }
  return {exact == 100 && greedy_equal == 100, "width 27 equals enumeration on " + std::to_string(exact) +
                                                   "/100 models; width 1 equals greedy on " +
                                                   std::to_string(greedy_equal) + "/100"};
}

Outcome metric_oracles() {
  const auto words = [](const std::string& s) { return tokenize(s); };
  const auto counts = clipped_ngram_counts(words("the the the the the the the"), {words("the cat is on the mat")}, 1);
  const double p1 = static_cast<double>(counts.first) / static_cast<double>(counts.second);
  const double rouge = rouge_l(words("a b c d"), {words("a c d b")});
  const double met = meteor_score(words("the cat"), words("the cat"));
  std::vector<EvalPair> identical;
  const std::vector<std::string> caps{"a dog barks loudly", "the red car passes by", "birds chirp in tall trees"};
  for (std::size_t i = 0; i < caps.size(); ++i) identical.push_back({"c" + std::to_string(i), words(caps[i]), {words(caps[i])}});
  const auto cider = cider_d(identical);
  double cider_worst = 0.0;
  for (double s : cider) cider_worst = std::max(cider_worst, std::abs(s - 10.0));
  const double sp = *spider(0.6532, 0.1641);

  const bool ok = std::abs(p1 - 2.0 / 7.0) < kMetricTol && std::abs(rouge - 0.75) < kMetricTol &&
                  std::abs(met - 0.9375) < kMetricTol && cider_worst < kMetricTol && std::abs(sp - 0.40865) < kMetricTol;
  return {ok, "unigram precision " + fmt(p1, 7) + ", ROUGE-L " + fmt(rouge, 7) + ", METEOR " + fmt(met, 7) +
                  ", CIDEr-D " + fmt(cider.front(), 7) + ", SPIDEr " + fmt(sp, 7)};
}

ExperimentConfig base_experiment(const fs::path& dir) {
  ExperimentConfig c;
  c.data_dir = (dir / "data").string();
  c.out_dir = (dir / "runs").string();
  return c;
}

double last_train_loss(const ExperimentConfig& c, std::uint64_t seed) {
  std::ifstream in((fs::path(c.run_dir(seed)) / "run_log.jsonl").string());
  std::string line, last;
  while (std::getline(in, line)) {
    if (!line.empty()) last = line;
  }
  return nlohmann::json::parse(last).at("train_loss").get<double>();
}

Outcome overfit(const fs::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig c = base_experiment(work / "overfit");
  c.task.n_train = 100;
  c.task.n_val = 10;
  c.task.n_eval = 10;
  c.n_seeds = 1;
  const Manifest m = cmd_gen_data(c);
  const TrainedModel trained = cmd_train(c, 1);
  const double loss = last_train_loss(c, 1);
  const SplitContext train = prepare_split(trained.model, m, Split::kTrain);
  const auto candidates = decode_captions(trained, train, MixingWeight(kOverfitDecodeLambda), c.decode);
  const MetricReport report = evaluate_corpus(candidates, train.records, eval_options(c, Split::kTrain));
  const double secs = seconds_since(t0);
  return {loss < kOverfitLoss && report.bleu4 > kOverfitBleu && secs < kOverfitBudgetSeconds,
          "final train loss " + fmt(loss) + " nats/token, train BLEU-4 " + fmt(report.bleu4) + " (lambda " +
              fmt(kOverfitDecodeLambda) + "), " + fmt(secs, 4) + " s"};
}

struct SeedOutcome {
  double chosen = 1.0;
  double swept_cider = 0.0;
  double audio_only_cider = 0.0;
  MetricReport vision_only;
};

std::pair<double, double> mean_se(const std::vector<double>& xs) {
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  const double sd = xs.size() > 1 ? std::sqrt(v / static_cast<double>(xs.size() - 1)) : 0.0;
  return {m, sd / std::sqrt(static_cast<double>(xs.size()))};
}

std::vector<SeedOutcome> run_mode(const fs::path& dir, SecondaryMode mode, std::ostream& log) {
  ExperimentConfig c = base_experiment(dir);
  c.task.secondary_mode = mode;
  const Manifest m = cmd_gen_data(c);
  std::vector<SeedOutcome> out;
  for (const auto seed : c.seeds()) {
    const auto t0 = std::chrono::steady_clock::now();
    const TrainedModel trained = cmd_train(c, seed);
    const SplitContext val = prepare_split(trained.model, m, Split::kVal);
    const SplitContext eval = prepare_split(trained.model, m, Split::kEval);
    const EvalOptions eval_opts = eval_options(c, Split::kEval);
    const SweepResult sweep = cmd_sweep(trained, val, c.grid, c.selection_metric, c.decode, eval_options(c, Split::kVal));
    write_text_file((fs::path(c.run_dir(seed)) / "sweep.json").string(),
                    sweep_to_json(sweep, c.selection_metric).dump(2) + "\n");
    SeedOutcome o;
    o.chosen = sweep.chosen_lambda;
    o.swept_cider = cmd_eval(trained, eval, sweep.chosen_lambda, c.decode, eval_opts).report.cider_d;
    o.audio_only_cider = cmd_eval(trained, eval, 1.0, c.decode, eval_opts).report.cider_d;
    o.vision_only = cmd_vision_only(trained, eval, c.decode, eval_opts).report;
    log << "  [" << to_string(mode) << " seed " << seed << "] lambda " << o.chosen << ", CIDEr swept " << o.swept_cider
        << ", lambda=1 " << o.audio_only_cider << ", vision-only " << o.vision_only.cider_d << " ("
        << fmt(seconds_since(t0), 4) << " s)\n"
        << std::flush;
    out.push_back(o);
  }
  return out;
}

Outcome qualitative(const fs::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto semantic = run_mode(work / "semantic", SecondaryMode::kSemantic, std::cout);
  const auto noise = run_mode(work / "noise", SecondaryMode::kNoise, std::cout);

  // (a) paired improvement of swept over lambda=1 on semantic data.
  std::vector<double> gain_a, gain_b;
  for (const auto& o : semantic) gain_a.push_back(o.swept_cider - o.audio_only_cider);
  for (const auto& o : noise) gain_b.push_back(o.swept_cider - o.audio_only_cider);
  const auto [mean_a, se_a] = mean_se(gain_a);
  const bool a = mean_a > 2.0 * se_a && mean_a > 0.0;

  // (b) noise data: lambda=1 chosen on >= 4/5 seeds; swept within one SE of lambda=1.
  const auto ones = std::count_if(noise.begin(), noise.end(), [](const SeedOutcome& o) { return o.chosen == 1.0; });
  const auto [mean_b, se_b] = mean_se(gain_b);
  const bool b = ones >= 4 && std::abs(mean_b) <= se_b;

  // (c) vision-only: semantic strictly above noise on every metric (seed means).
  const auto metric_mean = [](const std::vector<SeedOutcome>& runs, double MetricReport::*field) {
    double s = 0.0;
    for (const auto& o : runs) s += o.vision_only.*field;
    return s / static_cast<double>(runs.size());
  };
  bool c = true;
  std::string c_detail;
  for (const auto& [name, field] : std::vector<std::pair<std::string, double MetricReport::*>>{
           {"BLEU-4", &MetricReport::bleu4},
           {"METEOR", &MetricReport::meteor},
           {"ROUGE-L", &MetricReport::rouge_l},
           {"CIDEr-D", &MetricReport::cider_d}}) {
    const double s = metric_mean(semantic, field), n = metric_mean(noise, field);
    c = c && s > n;
    c_detail += " " + name + " " + fmt(s, 3) + ">" + fmt(n, 3);
  }
  std::ostringstream d;
  d << "(a) " << (a ? "pass" : "fail") << ": semantic CIDEr gain " << fmt(mean_a) << " vs 2 SE " << fmt(2.0 * se_a)
    << "; (b) " << (b ? "pass" : "fail") << ": noise lambda=1 chosen on " << ones << "/5, gain " << fmt(mean_b)
    << " vs 1 SE " << fmt(se_b) << "; (c) " << (c ? "pass" : "fail") << ":" << c_detail << "; "
    << fmt(seconds_since(t0), 4) << " s";
  return {a && b && c, d.str()};
}

std::map<std::string, std::string> snapshot_files(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    // Training logs record wall-clock time and are not reports.
    if (!e.is_regular_file() || e.path().filename() == "run_log.jsonl") continue;
    out[fs::relative(e.path(), root).string()] = read_text_file(e.path().string());
  }
  return out;
}

Outcome determinism(const fs::path& work, const std::string& cli) {
  if (cli.empty()) return {false, "no --cli binary given"};
  const fs::path dir = work / "determinism";
  fs::create_directories(dir);
  ExperimentConfig c;
  c.data_dir = "data";
  c.out_dir = "runs";
  c.task.n_train = 100;
  c.task.n_val = 20;
  c.task.n_eval = 20;
  c.train.epochs = 4;
  c.train.warmup_epochs = 1;
  c.grid = {0.0, 0.25, 0.5, 0.75, 1.0};
  c.n_seeds = 1;
  nlohmann::json j = c;
  const std::string config = (dir / "experiment.json").string();
  write_text_file(config, j.dump(2) + "\n");

  const auto run_all = [&]() -> std::map<std::string, std::string> {
    fs::remove_all(dir / "data");
    fs::remove_all(dir / "runs");
    for (const char* cmd : {"gen-data", "train", "sweep", "eval"}) {
      const std::string line = "\"" + cli + "\" " + cmd + " --config \"" + config + "\"" +
                               (std::string(cmd) == "gen-data" ? "" : " --seed 1") + " > /dev/null";
      if (std::system(line.c_str()) != 0) throw std::runtime_error("command failed: " + line);
    }
    return snapshot_files(dir / "runs");
  };
  const auto first = run_all();
  const auto second = run_all();
  std::size_t checkpoints = 0, reports = 0, differing = 0;
  for (const auto& [name, bytes] : first) {
    checkpoints += name.ends_with(".ckpt");
    reports += name.ends_with(".json") || name.ends_with(".csv") || name.ends_with(".jsonl");
    auto it = second.find(name);
    differing += it == second.end() || it->second != bytes;
  }
  const bool ok = differing == 0 && first.size() == second.size() && checkpoints == c.train.epochs && reports >= 4;
  return {ok, std::to_string(first.size()) + " artifacts (" + std::to_string(checkpoints) + " checkpoints, " +
                  std::to_string(reports) + " reports) compared, " + std::to_string(differing) + " differ"};
}

Outcome round_trips(const fs::path& work) {
  const fs::path dir = work / "roundtrip";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::mt19937_64 rng(99);
  const std::vector<float> specials{0.0f, -0.0f, std::numeric_limits<float>::denorm_min(),
                                    std::numeric_limits<float>::max(), -std::numeric_limits<float>::max(),
                                    std::numeric_limits<float>::min(), 1e-30f, -3.5f};
  std::size_t fseq_ok = 0;
  for (int k = 0; k < 1000; ++k) {
    FeatureSequence s;
    s.clip_id = "f" + std::to_string(k);
    s.modality = (k % 2) ? Modality::kVisual : Modality::kAudio;
    s.frames = std::uniform_int_distribution<std::size_t>(1, 64)(rng);
    s.dim = std::uniform_int_distribution<std::size_t>(1, 96)(rng);
    std::normal_distribution<float> g(0.0f, 10.0f);
    for (std::size_t i = 0; i < s.frames * s.dim; ++i) {
      s.values.push_back(i % 17 == 0 ? specials[(i / 17) % specials.size()] : g(rng));
    }
    const std::string path = (dir / (s.clip_id + ".fseq")).string();
    write_fseq(path, s);
    const FeatureSequence r = read_fseq(path);
    const bool same = r.frames == s.frames && r.dim == s.dim && r.modality == s.modality &&
                      std::memcmp(r.values.data(), s.values.data(), s.values.size() * sizeof(float)) == 0 &&
                      encode_fseq(r) == read_text_file(path);
    fseq_ok += same;
  }

  ModelConfig mc;
  mc.vocab_size = 57;
  MultiEncoderTransformer model(mc, 3);
  const std::string a = (dir / "a.ckpt").string(), b = (dir / "b.ckpt").string();
  save_model(a, model);
  MultiEncoderTransformer other(mc, 4);
  load_model(a, other);
  save_model(b, other);
  bool values_ok = true;
  const auto pa = model.named_parameters(), pb = other.named_parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    for (std::size_t k = 0; k < pa[i].tensor.numel(); ++k) {
      values_ok = values_ok && pb[i].tensor.values()[k] == static_cast<double>(static_cast<float>(pa[i].tensor.values()[k]));
    }
  }
  const bool bytes_ok = read_text_file(a) == read_text_file(b);
  return {fseq_ok == 1000 && values_ok && bytes_ok,
          std::to_string(fseq_ok) + "/1000 FSEQ files bit-exact; checkpoint (" + std::to_string(model.parameter_count()) +
              " parameters) values " + (values_ok ? "exact" : "differ") + ", re-save " +
              (bytes_ok ? "byte-identical" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"avcap acceptance runner"};
  int only = 0;
  std::string work = (fs::temp_directory_path() / "avcap_acceptance").string();
  std::string cli;
  app.add_option("--only", only, "run a single criterion (1-9)")->check(CLI::Range(1, 9));
  app.add_option("--work", work, "scratch directory");
  app.add_option("--cli", cli, "path to the avcap command-line binary");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"mixing collapse", mixing_collapse},
      {"lambda affinity", lambda_affinity},
      {"beam-search oracle", beam_oracle},
      {"metric oracles", metric_oracles},
      {"overfit smoke test", [&] { return overfit(work); }},
      {"qualitative fusion contrasts", [&] { return qualitative(work); }},
      {"determinism", [&] { return determinism(work, cli); }},
      {"format round trips", [&] { return round_trips(work); }},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && static_cast<std::size_t>(only) != i + 1) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << ": " << o.detail << "\n"
              << std::flush;
  }
  return failures == 0 ? 0 : 1;
}
