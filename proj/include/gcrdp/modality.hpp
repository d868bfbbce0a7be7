// Copyright 2026 The gcrdp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string_view>

namespace gcrdp {

enum class Modality { kImage, kText };

constexpr std::string_view to_string(Modality m) { return m == Modality::kImage ? "image" : "text"; }

}  // namespace gcrdp
