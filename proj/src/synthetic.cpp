// Copyright 2026 The avcap Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic audiovisual captioning task. Each clip holds 1..3 sound events in
// temporal order plus one colour modifier attached to the first event's noun.
// The audio stream reveals event identity and order but never the modifier;
// what the secondary stream reveals depends on the mode:
//   semantic  whole-clip pattern of the event nouns and the modifier
//   temporal  event onset/offset/activity indicators only
//   noise     Gaussian noise drawn independently of everything else

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "avcap/data.h"
#include "avcap/errors.h"

namespace avcap {
namespace {

const std::vector<EventType>& default_events() {
  static const std::vector<EventType> events = {
      {"dog", "barks"},     {"cat", "meows"},    {"bird", "chirps"},  {"car", "passes"},
      {"man", "speaks"},    {"woman", "laughs"}, {"baby", "cries"},   {"engine", "idles"},
      {"water", "flows"},   {"bell", "rings"},   {"wind", "blows"},   {"train", "approaches"},
  };
  return events;
}

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

std::vector<double> gaussian_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

std::string clip_name(Split split, std::size_t index) {
  std::ostringstream os;
  os << to_string(split) << '_' << std::setw(4) << std::setfill('0') << index;
  return os.str();
}

}  // namespace

std::string to_string(SecondaryMode m) {
  switch (m) {
    case SecondaryMode::kSemantic: return "semantic";
    case SecondaryMode::kTemporal: return "temporal";
    case SecondaryMode::kNoise: return "noise";
  }
  return "semantic";
}

SecondaryMode parse_secondary_mode(const std::string& s) {
  if (s == "semantic") return SecondaryMode::kSemantic;
  if (s == "temporal") return SecondaryMode::kTemporal;
  if (s == "noise") return SecondaryMode::kNoise;
  throw ConfigError("unknown secondary mode '" + s + "'");
}

SyntheticTaskConfig SyntheticTaskConfig::resolved() const {
  SyntheticTaskConfig c = *this;
  if (c.events.empty()) c.events = default_events();
  if (c.modifiers.empty()) c.modifiers = {"red", "blue", "green", "black"};
  if (c.modifier_weights.empty()) {
    const std::vector<double> skewed = {0.4, 0.3, 0.2, 0.1};
    if (c.modifiers.size() == skewed.size()) {
      c.modifier_weights = skewed;
    } else {
      c.modifier_weights.assign(c.modifiers.size(), 1.0);
    }
  }
  if (c.modifier_weights.size() != c.modifiers.size()) {
    throw ConfigError("synthetic: modifier_weights must match modifiers");
  }
  if (c.noise_sigma < 0.0) throw ConfigError("synthetic: noise_sigma must be >= 0");
  if (c.min_events < 1 || c.min_events > c.max_events) throw ConfigError("synthetic: need 1 <= min_events <= max_events");
  if (c.max_events > c.events.size()) {
    throw ConfigError("synthetic: grammar has " + std::to_string(c.events.size()) +
                      " event types, cannot place " + std::to_string(c.max_events) + " distinct events per clip");
  }
  if (c.frames < 2 * c.max_events) {
    throw ConfigError("synthetic: " + std::to_string(c.frames) + " frames cannot hold " +
                      std::to_string(c.max_events) + " events");
  }
  if (c.d_audio == 0 || c.d_secondary == 0) throw ConfigError("synthetic: feature widths must be positive");
  if (c.secondary_mode == SecondaryMode::kTemporal && c.d_secondary < 3) {
    throw ConfigError("synthetic: temporal mode needs d_secondary >= 3");
  }
  for (const auto& e : c.events) {
    if (tokenize(e.noun) != std::vector<std::string>{e.noun} || tokenize(e.verb) != std::vector<std::string>{e.verb}) {
      throw ConfigError("synthetic: event words must be single normalized tokens");
    }
  }
  return c;
}

void to_json(nlohmann::json& j, const SyntheticTaskConfig& c) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : c.events) events.push_back({{"noun", e.noun}, {"verb", e.verb}});
  j = nlohmann::json{{"n_train", c.n_train},
                     {"n_val", c.n_val},
                     {"n_eval", c.n_eval},
                     {"frames", c.frames},
                     {"d_audio", c.d_audio},
                     {"d_secondary", c.d_secondary},
                     {"secondary_mode", to_string(c.secondary_mode)},
                     {"events", events},
                     {"modifiers", c.modifiers},
                     {"modifier_weights", c.modifier_weights},
                     {"min_events", c.min_events},
                     {"max_events", c.max_events},
                     {"noise_sigma", c.noise_sigma},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SyntheticTaskConfig& c) {
  c.n_train = j.value("n_train", c.n_train);
  c.n_val = j.value("n_val", c.n_val);
  c.n_eval = j.value("n_eval", c.n_eval);
  c.frames = j.value("frames", c.frames);
  c.d_audio = j.value("d_audio", c.d_audio);
  c.d_secondary = j.value("d_secondary", c.d_secondary);
  if (j.contains("secondary_mode")) c.secondary_mode = parse_secondary_mode(j.at("secondary_mode").get<std::string>());
  if (j.contains("events")) {
    c.events.clear();
    for (const auto& e : j.at("events")) c.events.push_back({e.at("noun").get<std::string>(), e.at("verb").get<std::string>()});
  }
  c.modifiers = j.value("modifiers", c.modifiers);
  c.modifier_weights = j.value("modifier_weights", c.modifier_weights);
  c.min_events = j.value("min_events", c.min_events);
  c.max_events = j.value("max_events", c.max_events);
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  c.seed = j.value("seed", c.seed);
}

std::string realize_caption(const SyntheticTaskConfig& resolved, const ClipContent& content, std::size_t variant) {
  struct Template {
    const char* prefix;
    const char* article;
    const char* connective;
  };
  static const Template templates[kCaptionVariants] = {
      {"", "a", "then"}, {"", "a", "and then"}, {"", "the", "then"}, {"", "a", "and later"}, {"first ", "a", "then"},
  };
  const auto& t = templates[variant % kCaptionVariants];
  std::string out = t.prefix;
  for (std::size_t i = 0; i < content.events.size(); ++i) {
    const auto& e = resolved.events[content.events[i]];
    if (i > 0) out += std::string(" ") + t.connective + " ";
    out += std::string(t.article) + " ";
    if (i == 0) out += resolved.modifiers[content.modifier] + " ";
    out += e.noun + " " + e.verb;
  }
  return out;
}

SyntheticDataset generate_synthetic(const SyntheticTaskConfig& config) {
  SyntheticDataset ds;
  ds.config = config.resolved();
  const auto& c = ds.config;

  auto proto_rng = make_rng(c.seed, 1);
  for (std::size_t e = 0; e < c.events.size(); ++e) ds.prototypes.audio_event.push_back(gaussian_vector(c.d_audio, proto_rng));
  for (std::size_t e = 0; e < c.events.size(); ++e) ds.prototypes.visual_noun.push_back(gaussian_vector(c.d_secondary, proto_rng));
  for (std::size_t m = 0; m < c.modifiers.size(); ++m) {
    ds.prototypes.visual_modifier.push_back(gaussian_vector(c.d_secondary, proto_rng));
  }

  // Independent streams: captions never depend on secondary-noise draws.
  auto content_rng = make_rng(c.seed, 2);
  auto audio_rng = make_rng(c.seed, 3);
  auto secondary_rng = make_rng(c.seed, 4);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::discrete_distribution<std::size_t> modifier_dist(c.modifier_weights.begin(), c.modifier_weights.end());
  std::uniform_int_distribution<std::size_t> count_dist(c.min_events, c.max_events);

  const std::pair<Split, std::size_t> parts[] = {{Split::kTrain, c.n_train}, {Split::kVal, c.n_val}, {Split::kEval, c.n_eval}};
  for (const auto& [split, count] : parts) {
    for (std::size_t i = 0; i < count; ++i) {
      SyntheticClip clip;
      clip.record.clip_id = clip_name(split, i);
      clip.record.split = split;

      ClipContent& content = clip.content;
      const std::size_t n_events = count_dist(content_rng);
      std::vector<std::size_t> pool(c.events.size());
      std::iota(pool.begin(), pool.end(), 0);
      for (std::size_t k = 0; k < n_events; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
        std::swap(pool[k], pool[pick(content_rng)]);
        content.events.push_back(pool[k]);
      }
      content.modifier = modifier_dist(content_rng);
      const std::size_t seg = c.frames / n_events;
      for (std::size_t k = 0; k < n_events; ++k) {
        const std::size_t min_len = std::max<std::size_t>(1, seg / 2);
        const std::size_t len = std::uniform_int_distribution<std::size_t>(min_len, seg)(content_rng);
        const std::size_t off = std::uniform_int_distribution<std::size_t>(0, seg - len)(content_rng);
        content.spans.emplace_back(k * seg + off, k * seg + off + len);
      }

      const std::size_t n_captions = split == Split::kTrain ? 1 : kCaptionVariants;
      for (std::size_t v = 0; v < n_captions; ++v) clip.record.captions.push_back(realize_caption(c, content, v));

      clip.audio.clip_id = clip.record.clip_id;
      clip.audio.modality = Modality::kAudio;
      clip.audio.frames = c.frames;
      clip.audio.dim = c.d_audio;
      clip.audio.values.resize(c.frames * c.d_audio);
      for (std::size_t t = 0; t < c.frames; ++t) {
        const std::vector<double>* proto = nullptr;
        for (std::size_t k = 0; k < n_events; ++k) {
          if (t >= content.spans[k].first && t < content.spans[k].second) {
            proto = &ds.prototypes.audio_event[content.events[k]];
          }
        }
        for (std::size_t d = 0; d < c.d_audio; ++d) {
          const double base = proto != nullptr ? (*proto)[d] : 0.0;
          clip.audio.values[t * c.d_audio + d] = static_cast<float>(base + c.noise_sigma * gauss(audio_rng));
        }
      }

      clip.secondary.clip_id = clip.record.clip_id;
      clip.secondary.modality = Modality::kVisual;
      clip.secondary.frames = c.frames;
      clip.secondary.dim = c.d_secondary;
      clip.secondary.values.resize(c.frames * c.d_secondary);
      std::vector<double> pattern(c.d_secondary, 0.0);
      if (c.secondary_mode == SecondaryMode::kSemantic) {
        for (auto e : content.events) {
          for (std::size_t d = 0; d < c.d_secondary; ++d) pattern[d] += ds.prototypes.visual_noun[e][d];
        }
        for (std::size_t d = 0; d < c.d_secondary; ++d) pattern[d] += ds.prototypes.visual_modifier[content.modifier][d];
      }
      for (std::size_t t = 0; t < c.frames; ++t) {
        std::vector<double> frame(c.d_secondary, 0.0);
        switch (c.secondary_mode) {
          case SecondaryMode::kSemantic:
            for (std::size_t d = 0; d < c.d_secondary; ++d) frame[d] = pattern[d] + c.noise_sigma * gauss(secondary_rng);
            break;
          case SecondaryMode::kTemporal:
            for (const auto& [b, e] : content.spans) {
              if (t == b) frame[0] = 1.0;
              if (t + 1 == e) frame[1] = 1.0;
              if (t >= b && t < e) frame[2] = 1.0;
            }
            for (std::size_t d = 0; d < c.d_secondary; ++d) frame[d] += c.noise_sigma * gauss(secondary_rng);
            break;
          case SecondaryMode::kNoise:
            for (std::size_t d = 0; d < c.d_secondary; ++d) frame[d] = gauss(secondary_rng);
            break;
        }
        for (std::size_t d = 0; d < c.d_secondary; ++d) {
          clip.secondary.values[t * c.d_secondary + d] = static_cast<float>(frame[d]);
        }
      }
      ds.clips.push_back(std::move(clip));
    }
  }
  return ds;
}

Manifest generate_synthetic_dataset(const SyntheticTaskConfig& config, const std::string& out_dir) {
  auto ds = generate_synthetic(config);
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "features");
  Manifest m;
  m.base_dir = out_dir;
  for (auto& clip : ds.clips) {
    clip.record.audio = "features/" + clip.record.clip_id + ".audio.fseq";
    clip.record.secondary = "features/" + clip.record.clip_id + ".secondary.fseq";
    write_fseq(m.resolve(clip.record.audio), clip.audio);
    write_fseq(m.resolve(clip.record.secondary), clip.secondary);
    m.records.push_back(clip.record);
  }
  write_manifest((fs::path(out_dir) / "manifest.jsonl").string(), m);
  nlohmann::json cfg = ds.config;
  std::ofstream((fs::path(out_dir) / "task.json").string()) << cfg.dump(2) << '\n';
  return m;
}

}  // namespace avcap
