// Copyright 2026 The gcrdp Authors
// SPDX-License-Identifier: Apache-2.0

#include "gcrdp/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "gcrdp/error.hpp"

namespace gcrdp::gmm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)

double log_gaussian(std::span<const double> x, std::span<const double> mean,
                    std::span<const double> var) {
  double acc = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double d = x[j] - mean[j];
    acc += kLog2Pi + std::log(var[j]) + d * d / var[j];
  }
  return -0.5 * acc;
}

double log_sum_exp(std::span<const double> v) {
  const double top = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(top)) return top;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - top);
  return top + std::log(acc);
}

// Population variance per dimension, floored.
std::vector<double> global_variance(const Tensor& x, double floor) {
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += x(i, j);
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) var[j] += (x(i, j) - mean[j]) * (x(i, j) - mean[j]);
  for (double& v : var) v = std::max(v / static_cast<double>(n), floor);
  return var;
}

void check_dims(const GmmParams& params, const LocalFeatureSet& features, const char* op) {
  if (features.dim() != params.dim()) {
    throw ShapeError(std::string(op) + ": descriptors have dimension " +
                     std::to_string(features.dim()) + " but the mixture has dimension " +
                     std::to_string(params.dim()));
  }
}

GmmParams kmeans_plus_plus_init(const LocalFeatureSet& features, std::size_t k,
                                std::uint64_t seed, double floor) {
  const Tensor& x = features.descriptors;
  const std::size_t n = x.rows(), d = x.cols();
  std::mt19937_64 rng(seed);

  std::vector<std::size_t> centers;
  centers.push_back(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  while (centers.size() < k) {
    auto c = x.row_span(centers.back());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      auto r = x.row_span(i);
      double dist = 0.0;
      for (std::size_t j = 0; j < d; ++j) dist += (r[j] - c[j]) * (r[j] - c[j]);
      best[i] = std::min(best[i], dist);
      total += best[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        if (u < best[i]) {
          pick = i;
          break;
        }
        u -= best[i];
      }
    } else {
      // Every descriptor coincides with a chosen center.
      pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    }
    centers.push_back(pick);
  }

  GmmParams p;
  p.weights.assign(k, 1.0 / static_cast<double>(k));
  p.means = Tensor::zeros(k, d);
  p.variances = Tensor::zeros(k, d);
  const std::vector<double> var = global_variance(x, floor);
  for (std::size_t c = 0; c < k; ++c) {
    std::copy(x.row_span(centers[c]).begin(), x.row_span(centers[c]).end(),
              p.means.row_span(c).begin());
    std::copy(var.begin(), var.end(), p.variances.row_span(c).begin());
  }
  return p;
}

}  // namespace

void LocalFeatureSet::validate() const {
  if (descriptors.rank() != 2 || descriptors.rows() == 0 || descriptors.cols() == 0) {
    throw ConfigError("LocalFeatureSet: need a non-empty L x d descriptor matrix, got " +
                      descriptors.shape_string());
  }
  if (!descriptors.all_finite()) {
    throw ConfigError(std::string("LocalFeatureSet: non-finite ") + std::string(to_string(modality)) +
                      " descriptor");
  }
}

void GmmParams::validate(double variance_floor) const {
  const std::size_t k = weights.size();
  if (k == 0) throw ConfigError("GmmParams: no components");
  if (means.rank() != 2 || variances.rank() != 2 || means.rows() != k ||
      variances.shape() != means.shape()) {
    throw ShapeError("GmmParams: " + std::to_string(k) + " weights, means " + means.shape_string() +
                     ", variances " + variances.shape_string());
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0 && w <= 1.0)) throw NumericError("GmmParams: weight outside [0, 1]");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw NumericError("GmmParams: weights sum to " + std::to_string(total));
  }
  // A relative slack absorbs the rounding of values stored exactly at the floor.
  for (double v : variances.data()) {
    if (!(v >= variance_floor * (1.0 - 1e-12))) {
      throw NumericError("GmmParams: variance " + std::to_string(v) + " below floor");
    }
  }
  if (!means.all_finite()) throw NumericError("GmmParams: non-finite mean");
}

std::vector<double> Responsibilities::mass() const {
  std::vector<double> m(gamma.cols(), 0.0);
  for (std::size_t n = 0; n < gamma.rows(); ++n)
    for (std::size_t k = 0; k < gamma.cols(); ++k) m[k] += gamma(n, k);
  return m;
}

double log_density(const GmmParams& params, std::span<const double> x) {
  if (x.size() != params.dim()) {
    throw ShapeError("log_density: point has dimension " + std::to_string(x.size()) +
                     " but the mixture has dimension " + std::to_string(params.dim()));
  }
  std::vector<double> terms(params.components());
  for (std::size_t k = 0; k < terms.size(); ++k) {
    terms[k] = std::log(params.weights[k]) +
               log_gaussian(x, params.means.row_span(k), params.variances.row_span(k));
  }
  return log_sum_exp(terms);
}

Responsibilities e_step(const GmmParams& params, const LocalFeatureSet& features) {
  check_dims(params, features, "e_step");
  const Tensor& x = features.descriptors;
  const std::size_t n = x.rows(), k = params.components();
  Responsibilities out;
  out.gamma = Tensor::zeros(n, k);
  std::vector<double> terms(k);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < k; ++c) {
      terms[c] = std::log(params.weights[c]) +
                 log_gaussian(x.row_span(i), params.means.row_span(c), params.variances.row_span(c));
    }
    const double lse = log_sum_exp(terms);
    if (!std::isfinite(lse)) {
      throw NumericError("e_step: every component density underflows for " +
                         std::string(to_string(features.modality)) + " descriptor " +
                         std::to_string(i) + "; increase the variance floor");
    }
    for (std::size_t c = 0; c < k; ++c) out.gamma(i, c) = std::exp(terms[c] - lse);
    total += lse;
  }
  out.log_likelihood = total;
  return out;
}

GmmParams m_step(const LocalFeatureSet& features, const Responsibilities& resp,
                 double variance_floor) {
  const Tensor& x = features.descriptors;
  const Tensor& g = resp.gamma;
  if (g.rows() != x.rows()) {
    throw ShapeError("m_step: " + std::to_string(x.rows()) + " descriptors but responsibilities " +
                     g.shape_string());
  }
  const std::size_t n = x.rows(), d = x.cols(), k = g.cols();
  const std::vector<double> mass = resp.mass();

  GmmParams p;
  p.weights.assign(k, 0.0);
  p.means = Tensor::zeros(k, d);
  p.variances = Tensor::zeros(k, d);
  std::vector<std::size_t> empty;
  for (std::size_t c = 0; c < k; ++c) {
    if (mass[c] < kEmptyComponentMass) {
      empty.push_back(c);
      continue;
    }
    p.weights[c] = mass[c] / static_cast<double>(n);
    auto mu = p.means.row_span(c);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) mu[j] += g(i, c) * x(i, j);
    for (double& m : mu) m /= mass[c];
    auto var = p.variances.row_span(c);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = x(i, j) - mu[j];
        var[j] += g(i, c) * diff * diff;
      }
    }
    for (double& v : var) v = std::max(v / mass[c], variance_floor);
  }

  if (!empty.empty()) {
    // Density of each descriptor under the surviving components, unnormalized.
    const std::vector<double> fallback_var = global_variance(x, variance_floor);
    std::vector<double> score(n, -std::numeric_limits<double>::infinity());
    std::vector<double> terms;
    for (std::size_t i = 0; i < n; ++i) {
      terms.clear();
      for (std::size_t c = 0; c < k; ++c) {
        if (p.weights[c] > 0.0) {
          terms.push_back(std::log(p.weights[c]) +
                          log_gaussian(x.row_span(i), p.means.row_span(c), p.variances.row_span(c)));
        }
      }
      score[i] = log_sum_exp(terms);
    }
    std::vector<bool> used(n, false);
    for (std::size_t c : empty) {
      std::size_t pick = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (!used[i] && (pick == n || score[i] < score[pick])) pick = i;
      }
      if (pick == n) pick = 0;
      used[pick] = true;
      std::copy(x.row_span(pick).begin(), x.row_span(pick).end(), p.means.row_span(c).begin());
      std::copy(fallback_var.begin(), fallback_var.end(), p.variances.row_span(c).begin());
      p.weights[c] = 1.0 / static_cast<double>(n);
    }
    const double total = std::accumulate(p.weights.begin(), p.weights.end(), 0.0);
    for (double& w : p.weights) w /= total;
  }
  return p;
}

void sort_by_weight(GmmParams& params, Responsibilities& resp) {
  const std::size_t k = params.components();
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return params.weights[a] > params.weights[b];
  });
  GmmParams sorted;
  sorted.weights.resize(k);
  sorted.means = Tensor::zeros(k, params.dim());
  sorted.variances = Tensor::zeros(k, params.dim());
  Tensor gamma = Tensor::zeros(resp.gamma.rows(), k);
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t from = order[c];
    sorted.weights[c] = params.weights[from];
    std::copy(params.means.row_span(from).begin(), params.means.row_span(from).end(),
              sorted.means.row_span(c).begin());
    std::copy(params.variances.row_span(from).begin(), params.variances.row_span(from).end(),
              sorted.variances.row_span(c).begin());
    for (std::size_t i = 0; i < gamma.rows(); ++i) gamma(i, c) = resp.gamma(i, from);
  }
  params = std::move(sorted);
  resp.gamma = std::move(gamma);
}

EmFit fit_em(const LocalFeatureSet& features, std::size_t k, std::uint64_t seed,
             const EmOptions& options) {
  features.validate();
  if (k == 0) throw ConfigError("fit_em: need at least one component");
  if (k > features.count()) {
    throw ConfigError("fit_em: " + std::to_string(k) + " components requested but only " +
                      std::to_string(features.count()) + " " +
                      std::string(to_string(features.modality)) + " descriptors available");
  }

  EmFit fit;
  fit.params = kmeans_plus_plus_init(features, k, seed, options.variance_floor);
  for (int it = 0;; ++it) {
    fit.responsibilities = e_step(fit.params, features);
    const double ll = fit.responsibilities.log_likelihood;
    const bool improved_enough = fit.trace.empty() || ll - fit.trace.back() >= options.tolerance;
    fit.trace.push_back(ll);
    if (!improved_enough) {
      fit.converged = true;
      break;
    }
    if (it >= options.max_iterations) break;
    fit.params = m_step(features, fit.responsibilities, options.variance_floor);
    ++fit.iterations;
  }
  sort_by_weight(fit.params, fit.responsibilities);
  return fit;
}

Tensor component_embeddings(const GmmParams& params) {
  const std::size_t k = params.components(), d = params.dim();
  Tensor out = Tensor::zeros(k, 2 * d + 1);
  for (std::size_t c = 0; c < k; ++c) {
    auto row = out.row_span(c);
    for (std::size_t j = 0; j < d; ++j) {
      row[j] = params.means(c, j);
      row[d + j] = std::sqrt(params.variances(c, j));
    }
    row[2 * d] = params.weights[c];
  }
  return kernel::l2_normalize_rows(out);
}

PrototypeVector build_prototype(const GmmParams& params, const Responsibilities& resp) {
  if (resp.gamma.cols() != params.components()) {
    throw ShapeError("build_prototype: responsibilities " + resp.gamma.shape_string() + " for " +
                     std::to_string(params.components()) + " components");
  }
  const std::vector<double> mass = resp.mass();
  std::size_t best = 0;
  for (std::size_t c = 1; c < mass.size(); ++c) {
    if (mass[c] > mass[best]) best = c;
  }
  PrototypeVector out;
  out.selected = best;
  out.components = component_embeddings(params);
  out.prototype = Tensor::row(std::vector<double>(out.components.row_span(best).begin(),
                                                  out.components.row_span(best).end()));
  return out;
}

Tensor joint_feature(const PrototypeVector& image, const PrototypeVector& text) {
  const Tensor parts[] = {image.prototype, text.prototype};
  return kernel::concat_cols(parts);
}

Tensor mean_pool_embedding(const Tensor& descriptors) {
  const Tensor ones = Tensor::filled(descriptors.rows(), 1, 1.0);
  return kernel::l2_normalize_rows(kernel::weighted_row_mean(descriptors, ones));
}

DiffGmm soft_refit(Tape& tape, NodeId features, const Responsibilities& resp,
                   double variance_floor) {
  const Tensor& x = tape.value(features);
  const Tensor& g = resp.gamma;
  if (g.rows() != x.rows()) {
    throw ShapeError("soft_refit: " + std::to_string(x.rows()) +
                     " descriptors but responsibilities " + g.shape_string());
  }
  const std::size_t n = x.rows(), d = x.cols(), k = g.cols();
  const std::vector<double> mass = resp.mass();
  const NodeId ones = tape.constant(Tensor::filled(n, 1, 1.0));

  DiffGmm out;
  for (std::size_t c = 0; c < k; ++c) {
    if (mass[c] < kEmptyComponentMass) {
      throw NumericError("soft_refit: component " + std::to_string(c) +
                         " has no responsibility mass; refit the mixture first");
    }
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = g(i, c);
    const NodeId w = tape.constant(Tensor::column(std::move(col)));

    const NodeId mu = tape.weighted_row_mean(features, w);
    const NodeId centered = tape.sub(features, tape.matmul(ones, mu));
    const NodeId raw_var = tape.weighted_row_mean(tape.mul(centered, centered), w);

    // max(var, floor) as keep * var + floor * (1 - keep) with a constant mask.
    const Tensor& rv = tape.value(raw_var);
    Tensor keep = Tensor::zeros(1, d);
    Tensor floor = Tensor::zeros(1, d);
    for (std::size_t j = 0; j < d; ++j) {
      const bool above = rv(0, j) >= variance_floor;
      keep(0, j) = above ? 1.0 : 0.0;
      floor(0, j) = above ? 0.0 : variance_floor;
    }
    const NodeId var =
        tape.add(tape.mul(raw_var, tape.constant(std::move(keep))), tape.constant(std::move(floor)));

    out.means.push_back(mu);
    out.variances.push_back(var);
    out.weights.push_back(mass[c] / static_cast<double>(n));
  }
  return out;
}

NodeId component_embeddings(Tape& tape, const DiffGmm& gmm) {
  std::vector<NodeId> rows;
  for (std::size_t c = 0; c < gmm.means.size(); ++c) {
    const NodeId sd = tape.exp(tape.scale(tape.log(gmm.variances[c]), 0.5));
    const NodeId w = tape.constant(Tensor::scalar(gmm.weights[c]));
    rows.push_back(tape.concat_cols({gmm.means[c], sd, w}));
  }
  return tape.l2_normalize_rows(tape.concat_rows(rows));
}

NodeId mean_pool_embedding(Tape& tape, NodeId features) {
  const NodeId ones = tape.constant(Tensor::filled(tape.value(features).rows(), 1, 1.0));
  return tape.l2_normalize_rows(tape.weighted_row_mean(features, ones));
}

}  // namespace gcrdp::gmm
