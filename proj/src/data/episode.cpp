// Copyright 2026 The gcrdp Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "gcrdp/data.hpp"
#include "gcrdp/error.hpp"

namespace gcrdp::data {

std::vector<std::uint64_t> EpisodeSplit::support_ids() const {
  std::vector<std::uint64_t> out;
  for (const auto& [cls, ids] : support) out.insert(out.end(), ids.begin(), ids.end());
  return out;
}

EpisodeSplit make_episode(const Dataset& dataset, std::uint64_t seed, std::uint32_t shots,
                          double source_fraction) {
  if (!(source_fraction > 0.0 && source_fraction < 1.0)) {
    throw ConfigError("make_episode: source_fraction must lie in (0, 1)");
  }
  std::map<std::uint32_t, std::vector<std::uint64_t>> by_class;
  for (const auto& r : dataset.records()) by_class[r.label].push_back(r.id);
  if (by_class.size() < 2) {
    throw ConfigError("make_episode: need at least 2 classes, dataset has " +
                      std::to_string(by_class.size()));
  }

  std::vector<std::uint32_t> classes;
  for (const auto& [cls, ids] : by_class) classes.push_back(cls);
  std::mt19937_64 rng(seed);
  std::shuffle(classes.begin(), classes.end(), rng);
  auto n_source = static_cast<std::size_t>(std::lround(source_fraction * static_cast<double>(classes.size())));
  n_source = std::clamp<std::size_t>(n_source, 1, classes.size() - 1);

  EpisodeSplit split;
  split.shots = shots;
  split.source_classes.assign(classes.begin(), classes.begin() + static_cast<std::ptrdiff_t>(n_source));
  split.target_classes.assign(classes.begin() + static_cast<std::ptrdiff_t>(n_source), classes.end());
  std::sort(split.source_classes.begin(), split.source_classes.end());
  std::sort(split.target_classes.begin(), split.target_classes.end());

  for (std::uint32_t cls : split.source_classes) {
    const auto& ids = by_class[cls];
    split.source_ids.insert(split.source_ids.end(), ids.begin(), ids.end());
  }
  for (std::uint32_t cls : split.target_classes) {
    std::vector<std::uint64_t> ids = by_class[cls];
    if (ids.size() < static_cast<std::size_t>(shots) + 1) {
      throw ConfigError("make_episode: class " + std::to_string(cls) + " has " +
                        std::to_string(ids.size()) + " samples; " + std::to_string(shots) +
                        "-shot needs at least " + std::to_string(shots + 1));
    }
    std::shuffle(ids.begin(), ids.end(), rng);
    std::vector<std::uint64_t> support(ids.begin(), ids.begin() + shots);
    std::sort(support.begin(), support.end());
    split.support[cls] = std::move(support);
    split.query_ids.insert(split.query_ids.end(), ids.begin() + shots, ids.end());
  }
  std::sort(split.source_ids.begin(), split.source_ids.end());
  std::sort(split.query_ids.begin(), split.query_ids.end());
  return split;
}

std::vector<std::vector<std::uint64_t>> make_batches(std::vector<std::uint64_t> ids,
                                                     std::size_t batch_size, std::mt19937_64& rng,
                                                     bool keep_short) {
  if (batch_size < 2) {
    throw ConfigError("make_batches: batch size must be at least 2, got " + std::to_string(batch_size));
  }
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<std::vector<std::uint64_t>> batches;
  for (std::size_t start = 0; start < ids.size(); start += batch_size) {
    const std::size_t end = std::min(start + batch_size, ids.size());
    if (end - start < batch_size && (!keep_short || end - start < 2)) break;
    batches.emplace_back(ids.begin() + static_cast<std::ptrdiff_t>(start),
                         ids.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::vector<std::vector<std::uint64_t>> make_batches(std::vector<std::uint64_t> ids,
                                                     std::size_t batch_size, std::uint64_t seed,
                                                     bool keep_short) {
  std::mt19937_64 rng(seed);
  return make_batches(std::move(ids), batch_size, rng, keep_short);
}

}  // namespace gcrdp::data
