// Copyright 2026 The avcap Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>

#include "avcap/data.h"

namespace avcap {

FeatureSequence spec_mask(const FeatureSequence& features, std::size_t max_t, std::size_t max_f,
                          std::mt19937_64& rng) {
  FeatureSequence out = features;
  const std::size_t t_cap = std::min(max_t, features.frames);
  const std::size_t f_cap = std::min(max_f, features.dim);

  const std::size_t t_width = std::uniform_int_distribution<std::size_t>(0, t_cap)(rng);
  const std::size_t t_start = std::uniform_int_distribution<std::size_t>(0, features.frames - t_width)(rng);
  for (std::size_t t = t_start; t < t_start + t_width; ++t) {
    std::fill_n(out.values.begin() + static_cast<std::ptrdiff_t>(t * features.dim), features.dim, 0.0f);
  }

  const std::size_t f_width = std::uniform_int_distribution<std::size_t>(0, f_cap)(rng);
  const std::size_t f_start = std::uniform_int_distribution<std::size_t>(0, features.dim - f_width)(rng);
  for (std::size_t t = 0; t < features.frames; ++t) {
    for (std::size_t d = f_start; d < f_start + f_width; ++d) out.values[t * features.dim + d] = 0.0f;
  }
  return out;
}

}  // namespace avcap
