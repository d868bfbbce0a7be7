// Copyright 2026 The gcrdp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training objectives over a batch of paired component embeddings:
//
//   * multi-positive InfoNCE within one modality: one anchor component per
//     sample, its sibling components as positives, every component of the
//     other samples as negatives;
//   * cross-modal component alignment: cos(z_v[k], z_t[l]) pulled towards
//     1 when k == l and towards 0 otherwise;
//   * relative distance preservation: the text-side prototype similarity
//     matrix follows the image-side one on pairs the image side scores above
//     a threshold.
//
// Every term is mean-reduced and recorded on the caller's tape.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gcrdp/kernel/tape.hpp"
#include "gcrdp/modality.hpp"

namespace gcrdp::losses {

using kernel::NodeId;
using kernel::Tape;
using kernel::Tensor;

struct PairBatch {
  std::vector<NodeId> image_components;  // per sample, K_v x p, unit rows
  std::vector<NodeId> text_components;   // per sample, K_t x p, unit rows
  NodeId image_prototypes;               // N x p
  NodeId text_prototypes;                // N x p
  std::vector<std::uint32_t> labels;

  std::size_t size() const noexcept { return image_components.size(); }
  const std::vector<NodeId>& components(Modality m) const {
    return m == Modality::kImage ? image_components : text_components;
  }
  NodeId prototypes(Modality m) const { return m == Modality::kImage ? image_prototypes : text_prototypes; }

  // N >= 2, consistent shapes, every embedding row unit-norm within 1e-9.
  void validate(const Tape& tape) const;
};

// Stacks per-sample prototypes, taking row selected[i] of each sample's
// component matrix.
PairBatch make_pair_batch(Tape& tape, std::vector<NodeId> image_components,
                          std::vector<NodeId> text_components,
                          std::span<const std::size_t> image_selected,
                          std::span<const std::size_t> text_selected,
                          std::vector<std::uint32_t> labels);

struct ContrastConfig {
  double temperature = 0.1;
  std::uint64_t anchor_seed = 0;
  // 0 means every component of the other N-1 samples.
  std::size_t negatives_per_anchor = 0;
  // Single-embedding mode (no mixture): there are no sibling positives and
  // the contrastive term is left out of the total.
  bool enabled = true;

  void validate() const;
};

struct LossWeights {
  double alpha = 1.0;
  double lambda = 1.0;
  double theta = 0.5;

  void validate() const;
};

// One anchor index per sample, uniform over [0, k).
std::vector<std::size_t> draw_anchors(std::size_t samples, std::size_t k, std::uint64_t seed);

NodeId ence_loss(Tape& tape, const PairBatch& batch, const ContrastConfig& cfg, Modality modality);
NodeId ence_loss(Tape& tape, const PairBatch& batch, const ContrastConfig& cfg, Modality modality,
                 std::span<const std::size_t> anchors);

NodeId cross_modal_loss(Tape& tape, const PairBatch& batch);

// N x N cosine similarities of the prototypes of one modality.
NodeId similarity_matrix(Tape& tape, const PairBatch& batch, Modality modality);

// Mean squared difference over pairs with D_v(i, j) > theta (diagonal
// included); 0 when no pair qualifies. The mask is a constant.
NodeId rdp_loss(Tape& tape, NodeId image_similarity, NodeId text_similarity, double theta);

struct LossBreakdown {
  NodeId total;
  double ence_image = 0.0;
  double ence_text = 0.0;
  double cross = 0.0;  // unweighted
  double rdp = 0.0;    // unweighted
  double alpha = 0.0;
  double lambda = 0.0;

  double total_value(const Tape& tape) const { return tape.value(total).item(); }
  // ence_image + ence_text + alpha * cross + lambda * rdp
  double recomposed() const { return ence_image + ence_text + alpha * cross + lambda * rdp; }
};

// ence(image) + ence(text) + alpha * cross + lambda * rdp. Terms with a zero
// weight are evaluated for the breakdown but never enter the total.
LossBreakdown total_loss(Tape& tape, const PairBatch& batch, const ContrastConfig& cfg,
                         const LossWeights& weights);

}  // namespace gcrdp::losses
