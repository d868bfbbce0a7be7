// Copyright 2026 The gcrdp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Cosine-ranked cross-modal retrieval and class-based average precision.

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gcrdp/data.hpp"
#include "gcrdp/kernel/tensor.hpp"
#include "gcrdp/trainer.hpp"

namespace gcrdp::eval {

using kernel::Tensor;

enum class Direction { kImageToText, kTextToImage };

const char* to_string(Direction d) noexcept;

// Embeddings of one modality, one row per item.
struct Gallery {
  std::vector<std::uint64_t> ids;
  std::vector<std::uint32_t> labels;
  Tensor embeddings;  // n x p

  std::size_t size() const noexcept { return ids.size(); }
  void validate() const;
};

struct RetrievalResult {
  std::uint64_t query_id = 0;
  std::vector<std::uint64_t> ranked_ids;
  std::vector<double> scores;   // non-increasing
  std::vector<bool> relevant;   // delta(r)

  std::size_t relevant_count() const;
};

// Sorts the whole gallery by descending cosine similarity to the query;
// equal scores go by ascending id. Relevance is label equality.
RetrievalResult rank_gallery(std::uint64_t query_id, std::uint32_t query_label, const Tensor& query,
                             const Gallery& gallery);

// (1/T) * sum over ranks r of precision@r for each relevant r, over the whole
// list. Throws ConfigError when nothing is relevant.
double average_precision(const RetrievalResult& result);
double average_precision(const std::vector<bool>& relevant);

struct EvalReport {
  Direction direction = Direction::kImageToText;
  std::vector<std::uint64_t> query_ids;  // ascending
  std::vector<double> ap;                // parallel to query_ids
  double map = 0.0;
  std::size_t excluded = 0;  // queries with no relevant gallery item
  std::uint32_t shots = 0;
  std::uint64_t seed = 0;
  nlohmann::json config;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

// Each query is ranked against the whole gallery. mAP is the plain mean of
// the per-query APs; queries without any relevant item are dropped and
// counted in `excluded`.
EvalReport evaluate_galleries(const Gallery& queries, const Gallery& gallery, Direction direction);

struct SplitEmbeddings {
  Gallery image;
  Gallery text;
};

// Prototype embeddings of the split's target queries (support excluded),
// in ascending id order.
SplitEmbeddings embed_queries(const train::ModelState& state, const data::EpisodeSplit& split,
                              const data::Dataset& dataset);

// I2T: every target image queries the target text gallery; T2I the reverse.
EvalReport evaluate(const train::ModelState& state, const data::EpisodeSplit& split,
                    const data::Dataset& dataset, Direction direction);

struct EvalPair {
  EvalReport i2t;
  EvalReport t2i;
  double avg() const { return (i2t.map + t2i.map) / 2.0; }
};

// Both directions from one embedding pass.
EvalPair evaluate_both(const train::ModelState& state, const data::EpisodeSplit& split,
                       const data::Dataset& dataset);

nlohmann::json to_json(const EvalReport& report);
// "query_id,ap" rows in query order, then "mAP,<value>".
void write_csv(std::ostream& out, const EvalReport& report);

}  // namespace gcrdp::eval
