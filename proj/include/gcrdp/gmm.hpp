// Copyright 2026 The gcrdp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Per-sample diagonal Gaussian mixtures fitted by EM over a sample's local
// descriptors, and the unit-norm component embeddings [mean, stddev, weight]
// derived from them.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gcrdp/kernel/tape.hpp"
#include "gcrdp/kernel/tensor.hpp"
#include "gcrdp/modality.hpp"

namespace gcrdp::gmm {

using kernel::NodeId;
using kernel::Tape;
using kernel::Tensor;

inline constexpr double kVarianceFloor = 1e-6;
inline constexpr double kEmptyComponentMass = 1e-12;

// L descriptors of dimension d for one sample and modality.
struct LocalFeatureSet {
  Modality modality = Modality::kImage;
  Tensor descriptors;  // L x d

  std::size_t count() const { return descriptors.rows(); }
  std::size_t dim() const { return descriptors.cols(); }
  // Throws ConfigError for an empty or non-finite set.
  void validate() const;
};

struct GmmParams {
  std::vector<double> weights;  // K
  Tensor means;                 // K x d
  Tensor variances;             // K x d, diagonal covariances

  std::size_t components() const { return weights.size(); }
  std::size_t dim() const { return means.cols(); }
  // Simplex within 1e-9, variances at or above the floor, shapes consistent.
  void validate(double variance_floor = kVarianceFloor) const;
};

struct Responsibilities {
  Tensor gamma;  // L x K, rows sum to one
  // Total log-likelihood of the descriptors under the parameters that
  // produced gamma.
  double log_likelihood = 0.0;

  // Column sums of gamma.
  std::vector<double> mass() const;
};

struct EmOptions {
  double tolerance = 1e-7;
  int max_iterations = 200;
  double variance_floor = kVarianceFloor;
};

struct EmFit {
  GmmParams params;
  Responsibilities responsibilities;
  // Log-likelihood after each E-step, starting from the initialization.
  std::vector<double> trace;
  int iterations = 0;
  bool converged = false;
};

struct PrototypeVector {
  std::size_t selected = 0;  // k*
  Tensor prototype;          // 1 x (2d+1)
  Tensor components;         // K x (2d+1), one unit-norm row per component
};

// log p(x | params) via log-sum-exp over components.
double log_density(const GmmParams& params, std::span<const double> x);

Responsibilities e_step(const GmmParams& params, const LocalFeatureSet& features);

// Re-estimates weights, means and floored diagonal variances. A component
// whose responsibility mass falls below kEmptyComponentMass is re-seeded at
// the descriptor with the lowest density under the remaining components.
GmmParams m_step(const LocalFeatureSet& features, const Responsibilities& resp,
                 double variance_floor = kVarianceFloor);

// EM from a seeded k-means++ start until the log-likelihood gain drops below
// the tolerance. Components of the result are ordered by descending weight
// (ties keep their fitted order), so the heaviest component is index 0.
EmFit fit_em(const LocalFeatureSet& features, std::size_t k, std::uint64_t seed,
             const EmOptions& options = {});

// Reorders components by descending weight; gamma columns follow.
void sort_by_weight(GmmParams& params, Responsibilities& resp);

// Unit-norm [mean, sqrt(variance), weight] rows, K x (2d+1).
Tensor component_embeddings(const GmmParams& params);

// Picks k* by largest responsibility mass (lowest index on ties).
PrototypeVector build_prototype(const GmmParams& params, const Responsibilities& resp);

// z = z_image (+) z_text.
Tensor joint_feature(const PrototypeVector& image, const PrototypeVector& text);

// L2-normalized mean of the descriptors: the single-prototype baseline.
Tensor mean_pool_embedding(const Tensor& descriptors);

// Differentiable re-estimation of the mixture from tape-resident features
// with frozen responsibilities. Weights depend only on gamma and are plain
// numbers.
struct DiffGmm {
  std::vector<NodeId> means;      // K nodes, 1 x d
  std::vector<NodeId> variances;  // K nodes, 1 x d
  std::vector<double> weights;
};

DiffGmm soft_refit(Tape& tape, NodeId features, const Responsibilities& resp,
                   double variance_floor = kVarianceFloor);

// Tape version of component_embeddings(): K x (2d+1) node.
NodeId component_embeddings(Tape& tape, const DiffGmm& gmm);

// Tape version of mean_pool_embedding(): 1 x d node.
NodeId mean_pool_embedding(Tape& tape, NodeId features);

}  // namespace gcrdp::gmm
