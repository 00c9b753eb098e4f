// Copyright 2026 The avcap Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint layout:
//
//   AVCAP-CKPT 1\n
//   <count>\n
//   <name> <d0>x<d1>[x<d2>]\n      (count lines)
//   end\n
//   float32 little-endian payloads, concatenated in header order

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "avcap/errors.h"
#include "avcap/model.h"

namespace avcap {
namespace {

constexpr const char* kMagicLine = "AVCAP-CKPT 1";

void put_f32(std::string& out, double v) {
  const float f = static_cast<float>(v);
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof bits);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

double get_f32(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  float f;
  std::memcpy(&f, &bits, sizeof f);
  return static_cast<double>(f);
}

Shape parse_shape(const std::string& text, std::uint64_t offset) {
  Shape shape;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto x = text.find('x', start);
    const auto part = text.substr(start, x == std::string::npos ? std::string::npos : x - start);
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos) {
      throw FormatError("checkpoint: bad shape '" + text + "'", offset);
    }
    shape.push_back(std::stoull(part));
    if (x == std::string::npos) break;
    start = x + 1;
  }
  if (shape.empty() || shape.size() > 3) throw FormatError("checkpoint: bad rank in '" + text + "'", offset);
  for (auto d : shape) {
    if (d == 0) throw FormatError("checkpoint: zero extent in '" + text + "'", offset);
  }
  return shape;
}

}  // namespace

void write_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::string out = std::string(kMagicLine) + "\n" + std::to_string(tensors.size()) + "\n";
  for (const auto& t : tensors) {
    if (t.name.empty() || t.name.find_first_of(" \n") != std::string::npos) {
      throw ContractError("checkpoint: invalid parameter name '" + t.name + "'");
    }
    auto s = shape_string(t.tensor.shape());
    out += t.name + " " + s.substr(1, s.size() - 2) + "\n";
  }
  out += "end\n";
  for (const auto& t : tensors) {
    for (double v : t.tensor.values()) put_f32(out, v);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("checkpoint: cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("checkpoint: write to '" + path + "' failed");
}

std::vector<NamedTensor> read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  std::size_t pos = 0;
  auto next_line = [&]() {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw FormatError("checkpoint: truncated header", pos);
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };

  if (next_line() != kMagicLine) throw FormatError("checkpoint: bad magic line", 0);
  const auto count_offset = pos;
  const auto count_line = next_line();
  if (count_line.empty() || count_line.find_first_not_of("0123456789") != std::string::npos) {
    throw FormatError("checkpoint: bad parameter count", count_offset);
  }
  const auto count = std::stoull(count_line);
  std::vector<std::pair<std::string, Shape>> header;
  for (std::size_t i = 0; i < count; ++i) {
    const auto line_offset = pos;
    const auto line = next_line();
    const auto sp = line.find(' ');
    if (sp == std::string::npos || sp == 0) throw FormatError("checkpoint: bad header line", line_offset);
    header.emplace_back(line.substr(0, sp), parse_shape(line.substr(sp + 1), line_offset));
  }
  const auto end_offset = pos;
  if (next_line() != "end") throw FormatError("checkpoint: missing end marker", end_offset);

  std::vector<NamedTensor> out;
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  for (auto& [name, shape] : header) {
    const auto n = shape_numel(shape);
    if (pos + 4 * n > bytes.size()) throw FormatError("checkpoint: truncated payload for " + name, pos);
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = get_f32(data + pos + 4 * i);
    pos += 4 * n;
    out.push_back({name, Tensor(shape, std::move(values))});
  }
  if (pos != bytes.size()) throw FormatError("checkpoint: trailing bytes", pos);
  return out;
}

void save_model(const std::string& path, const MultiEncoderTransformer& model) {
  write_checkpoint(path, model.named_parameters());
}

void load_model(const std::string& path, MultiEncoderTransformer& model) {
  auto loaded = read_checkpoint(path);
  auto params = model.named_parameters();
  if (loaded.size() != params.size()) {
    throw FormatError("checkpoint: " + std::to_string(loaded.size()) + " tensors, model expects " +
                          std::to_string(params.size()),
                      0);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (loaded[i].name != params[i].name || loaded[i].tensor.shape() != params[i].tensor.shape()) {
      throw FormatError("checkpoint: tensor " + loaded[i].name + " " + shape_string(loaded[i].tensor.shape()) +
                            " does not match model parameter " + params[i].name + " " +
                            shape_string(params[i].tensor.shape()),
                        0);
    }
    auto dst = params[i].tensor.values();
    std::copy(loaded[i].tensor.values().begin(), loaded[i].tensor.values().end(), dst.begin());
  }
}

}  // namespace avcap
