// Copyright 2026 The gcrdp Authors
// SPDX-License-Identifier: Apache-2.0

#include "gcrdp/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <string>

#include "gcrdp/error.hpp"

namespace gcrdp::eval {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

const char* to_string(Direction d) noexcept {
  return d == Direction::kImageToText ? "I2T" : "T2I";
}

void Gallery::validate() const {
  if (ids.empty()) throw ConfigError("gallery is empty");
  if (labels.size() != ids.size() || embeddings.rank() != 2 || embeddings.rows() != ids.size()) {
    throw ShapeError("gallery has " + std::to_string(ids.size()) + " ids, " +
                     std::to_string(labels.size()) + " labels and embeddings " +
                     embeddings.shape_string());
  }
}

std::size_t RetrievalResult::relevant_count() const {
  return static_cast<std::size_t>(std::count(relevant.begin(), relevant.end(), true));
}

RetrievalResult rank_gallery(std::uint64_t query_id, std::uint32_t query_label, const Tensor& query,
                             const Gallery& gallery) {
  gallery.validate();
  if (query.rank() != 2 || query.rows() != 1 || query.cols() != gallery.embeddings.cols()) {
    throw ShapeError("query " + std::to_string(query_id) + " is " + query.shape_string() +
                     ", gallery rows have width " + std::to_string(gallery.embeddings.cols()));
  }
  const Tensor sims = kernel::cosine(query, gallery.embeddings);
  std::vector<std::size_t> order(gallery.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double sa = sims(0, a), sb = sims(0, b);
    if (sa != sb) return sa > sb;
    return gallery.ids[a] < gallery.ids[b];
  });
  RetrievalResult r;
  r.query_id = query_id;
  for (std::size_t i : order) {
    r.ranked_ids.push_back(gallery.ids[i]);
    r.scores.push_back(sims(0, i));
    r.relevant.push_back(gallery.labels[i] == query_label);
  }
  return r;
}

double average_precision(const std::vector<bool>& relevant) {
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < relevant.size(); ++r) {
    if (!relevant[r]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  if (hits == 0) throw ConfigError("average precision is undefined without a relevant item");
  return sum / static_cast<double>(hits);
}

double average_precision(const RetrievalResult& result) {
  try {
    return average_precision(result.relevant);
  } catch (const ConfigError&) {
    throw ConfigError("query " + std::to_string(result.query_id) +
                      " has no relevant gallery item; average precision is undefined");
  }
}

EvalReport evaluate_galleries(const Gallery& queries, const Gallery& gallery, Direction direction) {
  queries.validate();
  gallery.validate();
  EvalReport report;
  report.direction = direction;
  std::vector<std::size_t> order(queries.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return queries.ids[a] < queries.ids[b]; });
  double sum = 0.0;
  for (std::size_t q : order) {
    const auto res = rank_gallery(queries.ids[q], queries.labels[q],
                                  Tensor::row(std::vector<double>(queries.embeddings.row_span(q).begin(),
                                                                  queries.embeddings.row_span(q).end())),
                                  gallery);
    if (res.relevant_count() == 0) {
      ++report.excluded;
      continue;
    }
    const double ap = average_precision(res);
    report.query_ids.push_back(queries.ids[q]);
    report.ap.push_back(ap);
    sum += ap;
  }
  if (report.ap.empty()) throw ConfigError("no query has a relevant gallery item");
  report.map = sum / static_cast<double>(report.ap.size());
  return report;
}

SplitEmbeddings embed_queries(const train::ModelState& state, const data::EpisodeSplit& split,
                              const data::Dataset& dataset) {
  if (split.query_ids.empty()) throw ConfigError("split has no target queries");
  std::vector<std::uint64_t> ids = split.query_ids;
  std::sort(ids.begin(), ids.end());
  SplitEmbeddings out;
  std::vector<double> image_rows, text_rows;
  std::size_t width = 0;
  for (std::uint64_t id : ids) {
    const data::SampleRecord& r = dataset.at(id);
    const train::Embedding e = train::embed(state, r);
    width = e.image_prototype.cols();
    image_rows.insert(image_rows.end(), e.image_prototype.data().begin(), e.image_prototype.data().end());
    text_rows.insert(text_rows.end(), e.text_prototype.data().begin(), e.text_prototype.data().end());
    for (Gallery* g : {&out.image, &out.text}) {
      g->ids.push_back(id);
      g->labels.push_back(r.label);
    }
  }
  out.image.embeddings = Tensor::matrix(ids.size(), width, std::move(image_rows));
  out.text.embeddings = Tensor::matrix(ids.size(), width, std::move(text_rows));
  return out;
}

namespace {

void stamp(EvalReport& r, const train::ModelState& state, const data::EpisodeSplit& split) {
  r.shots = split.shots;
  r.seed = state.config.seed;
  r.config = state.config;
}

}  // namespace

EvalReport evaluate(const train::ModelState& state, const data::EpisodeSplit& split,
                    const data::Dataset& dataset, Direction direction) {
  const SplitEmbeddings e = embed_queries(state, split, dataset);
  EvalReport r = direction == Direction::kImageToText
                     ? evaluate_galleries(e.image, e.text, direction)
                     : evaluate_galleries(e.text, e.image, direction);
  stamp(r, state, split);
  return r;
}

EvalPair evaluate_both(const train::ModelState& state, const data::EpisodeSplit& split,
                       const data::Dataset& dataset) {
  const SplitEmbeddings e = embed_queries(state, split, dataset);
  EvalPair p{evaluate_galleries(e.image, e.text, Direction::kImageToText),
             evaluate_galleries(e.text, e.image, Direction::kTextToImage)};
  stamp(p.i2t, state, split);
  stamp(p.t2i, state, split);
  return p;
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json per_query = nlohmann::json::array();
  for (std::size_t i = 0; i < report.ap.size(); ++i) {
    per_query.push_back({{"query_id", report.query_ids[i]}, {"ap", report.ap[i]}});
  }
  return {{"direction", to_string(report.direction)},
          {"shots", report.shots},
          {"seed", report.seed},
          {"map", report.map},
          {"excluded", report.excluded},
          {"config", report.config},
          {"queries", per_query}};
}

void write_csv(std::ostream& out, const EvalReport& report) {
  out << "query_id,ap\n";
  for (std::size_t i = 0; i < report.ap.size(); ++i) out << report.query_ids[i] << ',' << fmt(report.ap[i]) << '\n';
  out << "mAP," << fmt(report.map) << '\n';
}

}  // namespace gcrdp::eval
