// Copyright 2026 The avcap Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "avcap/data.h"
#include "avcap/errors.h"

namespace avcap {
namespace {

constexpr char kMagic[4] = {'F', 'S', 'Q', '1'};
constexpr std::size_t kHeaderBytes = 20;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

Tensor FeatureSequence::to_tensor() const {
  return Tensor({frames, dim}, std::vector<double>(values.begin(), values.end()));
}

std::string encode_fseq(const FeatureSequence& seq) {
  if (seq.frames == 0) throw ContractError("fseq: sequence '" + seq.clip_id + "' has no frames");
  if (seq.dim == 0) throw ContractError("fseq: sequence '" + seq.clip_id + "' has zero width");
  if (seq.values.size() != seq.frames * seq.dim) {
    throw DimensionError("fseq: " + std::to_string(seq.values.size()) + " values for " +
                         std::to_string(seq.frames) + "x" + std::to_string(seq.dim));
  }
  for (float v : seq.values) {
    if (!std::isfinite(v)) throw ContractError("fseq: non-finite value in '" + seq.clip_id + "'");
  }
  std::string out(kMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(seq.frames));
  put_u32(out, static_cast<std::uint32_t>(seq.dim));
  out.push_back(static_cast<char>(seq.modality));
  out.append(7, '\0');
  out.reserve(kHeaderBytes + 4 * seq.values.size());
  for (float v : seq.values) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put_u32(out, bits);
  }
  return out;
}

FeatureSequence decode_fseq(std::string_view bytes) {
  if (bytes.size() < kHeaderBytes) throw FormatError("fseq: truncated header", bytes.size());
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("fseq: bad magic", 0);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  FeatureSequence seq;
  seq.frames = get_u32(p + 4);
  seq.dim = get_u32(p + 8);
  if (seq.frames == 0) throw FormatError("fseq: zero frames", 4);
  if (seq.dim == 0) throw FormatError("fseq: zero feature width", 8);
  if (p[12] > 1) throw FormatError("fseq: unknown modality " + std::to_string(p[12]), 12);
  seq.modality = static_cast<Modality>(p[12]);
  for (std::size_t i = 13; i < kHeaderBytes; ++i) {
    if (p[i] != 0) throw FormatError("fseq: reserved byte is not zero", i);
  }
  const std::uint64_t n = static_cast<std::uint64_t>(seq.frames) * seq.dim;
  const std::uint64_t expected = kHeaderBytes + 4 * n;
  if (bytes.size() < expected) throw FormatError("fseq: truncated payload", bytes.size());
  if (bytes.size() > expected) throw FormatError("fseq: trailing bytes", expected);
  seq.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t bits = get_u32(p + kHeaderBytes + 4 * i);
    std::memcpy(&seq.values[i], &bits, sizeof bits);
  }
  return seq;
}

void write_fseq(const std::string& path, const FeatureSequence& seq) {
  const auto bytes = encode_fseq(seq);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("fseq: cannot open '" + path + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("fseq: write to '" + path + "' failed");
}

FeatureSequence read_fseq(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("fseq: cannot open '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  auto seq = decode_fseq(bytes);
  seq.clip_id = std::filesystem::path(path).stem().stem().string();
  return seq;
}

// ---------------------------------------------------------------------------

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kEval: return "eval";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "eval") return Split::kEval;
  throw ConfigError("unknown split '" + s + "'");
}

std::vector<ManifestRecord> Manifest::split(Split s) const {
  std::vector<ManifestRecord> out;
  for (const auto& r : records) {
    if (r.split == s) out.push_back(r);
  }
  return out;
}

std::string Manifest::resolve(const std::string& path) const {
  std::filesystem::path p(path);
  if (p.is_absolute() || base_dir.empty()) return p.string();
  return (std::filesystem::path(base_dir) / p).string();
}

void Manifest::validate() const {
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (!seen.insert(r.clip_id).second) throw ConfigError("manifest: duplicate clip_id '" + r.clip_id + "'");
    if (r.captions.empty()) throw ConfigError("manifest: clip '" + r.clip_id + "' has no captions");
  }
}

void write_manifest(const std::string& path, const Manifest& manifest) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("manifest: cannot open '" + path + "' for writing");
  for (const auto& r : manifest.records) {
    nlohmann::json j{{"clip_id", r.clip_id},
                     {"audio", r.audio},
                     {"secondary", r.secondary},
                     {"captions", r.captions},
                     {"split", to_string(r.split)}};
    f << j.dump() << '\n';
  }
  if (!f) throw IoError("manifest: write to '" + path + "' failed");
}

Manifest read_manifest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("manifest: cannot open '" + path + "'");
  Manifest m;
  m.base_dir = std::filesystem::path(path).parent_path().string();
  std::string line;
  std::uint64_t offset = 0;
  while (std::getline(f, line)) {
    const auto line_offset = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestRecord r;
      r.clip_id = j.at("clip_id").get<std::string>();
      r.audio = j.at("audio").get<std::string>();
      r.secondary = j.at("secondary").get<std::string>();
      r.captions = j.at("captions").get<std::vector<std::string>>();
      r.split = parse_split(j.at("split").get<std::string>());
      m.records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("manifest: " + std::string(e.what()), line_offset);
    }
  }
  m.validate();
  return m;
}

}  // namespace avcap
