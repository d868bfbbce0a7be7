// Copyright 2026 The gcrdp Authors
// SPDX-License-Identifier: Apache-2.0

#include "gcrdp/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "gcrdp/error.hpp"
#include "gcrdp/kernel/compose.hpp"

namespace gcrdp::losses {

namespace {

void check_unit_rows(const Tensor& t, const char* what, std::size_t sample) {
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const double n = kernel::norm(t.row_span(r));
    if (std::abs(n - 1.0) > 1e-9) {
      throw NumericError(std::string("PairBatch: ") + what + " embedding " + std::to_string(r) +
                         " of sample " + std::to_string(sample) + " has norm " + std::to_string(n));
    }
  }
}

std::uint64_t modality_salt(Modality m) { return m == Modality::kImage ? 0x1234567ULL : 0x7654321ULL; }

}  // namespace

void PairBatch::validate(const Tape& tape) const {
  const std::size_t n = size();
  if (n < 2) throw ConfigError("PairBatch: need at least 2 samples, got " + std::to_string(n));
  if (text_components.size() != n || labels.size() != n) {
    throw ShapeError("PairBatch: " + std::to_string(n) + " image entries, " +
                     std::to_string(text_components.size()) + " text entries, " +
                     std::to_string(labels.size()) + " labels");
  }
  for (Modality m : {Modality::kImage, Modality::kText}) {
    const auto& comps = components(m);
    const std::size_t k = tape.value(comps.front()).rows();
    const std::size_t p = tape.value(comps.front()).cols();
    for (std::size_t i = 0; i < n; ++i) {
      const Tensor& c = tape.value(comps[i]);
      if (c.rows() != k || c.cols() != p) {
        throw ShapeError("PairBatch: sample " + std::to_string(i) + " has " +
                         std::string(to_string(m)) + " components " + c.shape_string() +
                         ", expected [" + std::to_string(k) + ", " + std::to_string(p) + "]");
      }
      check_unit_rows(c, m == Modality::kImage ? "image" : "text", i);
    }
    const Tensor& protos = tape.value(prototypes(m));
    if (protos.rows() != n || protos.cols() != p) {
      throw ShapeError("PairBatch: prototypes " + protos.shape_string() + " for " +
                       std::to_string(n) + " samples of width " + std::to_string(p));
    }
  }
}

PairBatch make_pair_batch(Tape& tape, std::vector<NodeId> image_components,
                          std::vector<NodeId> text_components,
                          std::span<const std::size_t> image_selected,
                          std::span<const std::size_t> text_selected,
                          std::vector<std::uint32_t> labels) {
  const std::size_t n = image_components.size();
  if (text_components.size() != n || image_selected.size() != n || text_selected.size() != n) {
    throw ShapeError("make_pair_batch: per-sample inputs differ in length");
  }
  auto stack = [&](const std::vector<NodeId>& comps, std::span<const std::size_t> selected) {
    std::vector<NodeId> rows;
    rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t pick[] = {selected[i]};
      rows.push_back(kernel::gather_rows(tape, comps[i], pick));
    }
    return tape.concat_rows(rows);
  };
  PairBatch batch;
  batch.image_prototypes = stack(image_components, image_selected);
  batch.text_prototypes = stack(text_components, text_selected);
  batch.image_components = std::move(image_components);
  batch.text_components = std::move(text_components);
  batch.labels = std::move(labels);
  return batch;
}

void ContrastConfig::validate() const {
  if (!(temperature > 0.0)) {
    throw ConfigError("ContrastConfig: temperature must be positive, got " + std::to_string(temperature));
  }
}

void LossWeights::validate() const {
  if (!(alpha >= 0.0)) throw ConfigError("LossWeights: alpha must be >= 0");
  if (!(lambda >= 0.0)) throw ConfigError("LossWeights: lambda must be >= 0");
  if (!(theta > -1.0 && theta < 1.0)) throw ConfigError("LossWeights: theta must lie in (-1, 1)");
}

std::vector<std::size_t> draw_anchors(std::size_t samples, std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> out(samples);
  for (auto& a : out) a = std::uniform_int_distribution<std::size_t>(0, k - 1)(rng);
  return out;
}

NodeId ence_loss(Tape& tape, const PairBatch& batch, const ContrastConfig& cfg, Modality modality) {
  const std::size_t k = tape.value(batch.components(modality).front()).rows();
  const auto anchors = draw_anchors(batch.size(), k, cfg.anchor_seed ^ modality_salt(modality));
  return ence_loss(tape, batch, cfg, modality, anchors);
}

NodeId ence_loss(Tape& tape, const PairBatch& batch, const ContrastConfig& cfg, Modality modality,
                 std::span<const std::size_t> anchors) {
  cfg.validate();
  const auto& comps = batch.components(modality);
  const std::size_t n = comps.size();
  if (n < 2) throw ConfigError("ence_loss: need at least 2 samples for negatives");
  const std::size_t k = tape.value(comps.front()).rows();
  if (k < 2) {
    throw ConfigError("ence_loss: the " + std::string(to_string(modality)) +
                      " modality has " + std::to_string(k) +
                      " component(s); at least 2 are needed for a positive");
  }
  if (anchors.size() != n) throw ShapeError("ence_loss: one anchor per sample required");

  const NodeId all = tape.concat_rows(std::span<const NodeId>(comps));
  const double inv_tau = 1.0 / cfg.temperature;
  const NodeId ones = tape.constant(Tensor::filled(k - 1, 1, 1.0));
  std::mt19937_64 neg_rng(cfg.anchor_seed ^ modality_salt(modality) ^ 0x9e3779b97f4a7c15ULL);

  std::vector<NodeId> per_sample;
  for (std::size_t i = 0; i < n; ++i) {
    if (anchors[i] >= k) throw ShapeError("ence_loss: anchor index out of range");
    const std::size_t anchor_row[] = {i * k + anchors[i]};
    std::vector<std::size_t> pos_rows, neg_rows;
    for (std::size_t c = 0; c < k; ++c) {
      if (c != anchors[i]) pos_rows.push_back(i * k + c);
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      for (std::size_t c = 0; c < k; ++c) neg_rows.push_back(j * k + c);
    }
    if (cfg.negatives_per_anchor > 0) {
      if (cfg.negatives_per_anchor > neg_rows.size()) {
        throw ConfigError("ence_loss: " + std::to_string(cfg.negatives_per_anchor) +
                          " negatives requested but only " + std::to_string(neg_rows.size()) +
                          " available");
      }
      std::shuffle(neg_rows.begin(), neg_rows.end(), neg_rng);
      neg_rows.resize(cfg.negatives_per_anchor);
    }

    const NodeId anchor = kernel::gather_rows(tape, all, anchor_row);
    const NodeId pos = kernel::gather_rows(tape, all, pos_rows);
    const NodeId neg = kernel::gather_rows(tape, all, neg_rows);
    const NodeId s_pos = tape.cosine(pos, anchor);                          // (K-1) x 1
    const NodeId s_neg = tape.matmul(ones, tape.cosine(anchor, neg));       // (K-1) x M
    const NodeId logits = tape.scale(tape.concat_cols({s_pos, s_neg}), inv_tau);
    const NodeId per_positive = tape.sub(tape.logsumexp_rows(logits), tape.scale(s_pos, inv_tau));
    per_sample.push_back(kernel::mean(tape, per_positive));
  }
  return kernel::mean(tape, tape.concat_rows(per_sample));
}

NodeId cross_modal_loss(Tape& tape, const PairBatch& batch) {
  const std::size_t n = batch.size();
  if (n == 0) throw ConfigError("cross_modal_loss: empty batch");
  const std::size_t kv = tape.value(batch.image_components.front()).rows();
  const std::size_t kt = tape.value(batch.text_components.front()).rows();
  Tensor target = Tensor::zeros(kv, kt);
  for (std::size_t c = 0; c < std::min(kv, kt); ++c) target(c, c) = 1.0;
  const NodeId indicator = tape.constant(std::move(target));

  std::vector<NodeId> residuals;
  for (std::size_t i = 0; i < n; ++i) {
    const NodeId s = tape.cosine(batch.image_components[i], batch.text_components[i]);
    const NodeId diff = tape.sub(s, indicator);
    residuals.push_back(tape.mul(diff, diff));
  }
  return kernel::mean(tape, tape.concat_rows(residuals));
}

NodeId similarity_matrix(Tape& tape, const PairBatch& batch, Modality modality) {
  const NodeId p = batch.prototypes(modality);
  return tape.cosine(p, p);
}

NodeId rdp_loss(Tape& tape, NodeId image_similarity, NodeId text_similarity, double theta) {
  const Tensor& dv = tape.value(image_similarity);
  const Tensor& dt = tape.value(text_similarity);
  if (dv.shape() != dt.shape() || dv.rank() != 2 || dv.rows() != dv.cols()) {
    throw ShapeError("rdp_loss: similarity matrices " + dv.shape_string() + " and " +
                     dt.shape_string() + " must be equal-sized squares");
  }
  Tensor mask = Tensor::zeros(dv.rows(), dv.cols());
  for (std::size_t i = 0; i < mask.size(); ++i) mask.data()[i] = dv.data()[i] > theta ? 1.0 : 0.0;
  const NodeId diff = tape.sub(image_similarity, text_similarity);
  return tape.masked_mean(tape.mul(diff, diff), std::move(mask));
}

LossBreakdown total_loss(Tape& tape, const PairBatch& batch, const ContrastConfig& cfg,
                         const LossWeights& weights) {
  cfg.validate();
  weights.validate();
  batch.validate(tape);

  LossBreakdown out;
  out.alpha = weights.alpha;
  out.lambda = weights.lambda;

  std::vector<NodeId> terms;
  if (cfg.enabled) {
    const NodeId li = ence_loss(tape, batch, cfg, Modality::kImage);
    const NodeId lt = ence_loss(tape, batch, cfg, Modality::kText);
    out.ence_image = tape.value(li).item();
    out.ence_text = tape.value(lt).item();
    terms.push_back(li);
    terms.push_back(lt);
  }

  const NodeId cross = cross_modal_loss(tape, batch);
  out.cross = tape.value(cross).item();
  if (weights.alpha != 0.0) terms.push_back(tape.scale(cross, weights.alpha));

  const NodeId rdp = rdp_loss(tape, similarity_matrix(tape, batch, Modality::kImage),
                              similarity_matrix(tape, batch, Modality::kText), weights.theta);
  out.rdp = tape.value(rdp).item();
  if (weights.lambda != 0.0) terms.push_back(tape.scale(rdp, weights.lambda));

  if (terms.empty()) {
    out.total = tape.constant(Tensor::scalar(0.0));
  } else {
    out.total = tape.sum(tape.concat_rows(terms));
  }
  return out;
}

}  // namespace gcrdp::losses
