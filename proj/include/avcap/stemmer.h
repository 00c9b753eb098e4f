// Copyright 2026 The avcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>

namespace avcap {

/// Porter (1980) suffix-stripping stemmer over lowercase ASCII words, steps
/// 1a through 5b as in the original description. Words of length <= 2 are
/// returned unchanged.
std::string porter_stem(std::string_view word);

}  // namespace avcap
