// Copyright 2026 The gcrdp Authors
// SPDX-License-Identifier: Apache-2.0

#include "gcrdp/kernel/adam.hpp"

#include <cmath>

#include "gcrdp/error.hpp"

namespace gcrdp::kernel {

AdamState::AdamState(std::span<const Tensor> params, AdamConfig config) : config_(config) {
  for (const Tensor& p : params) {
    m_.emplace_back(p.shape(), std::vector<double>(p.size(), 0.0));
    v_.emplace_back(p.shape(), std::vector<double>(p.size(), 0.0));
  }
}

AdamState AdamState::restore(AdamConfig config, std::uint64_t steps, std::vector<Tensor> m,
                             std::vector<Tensor> v) {
  if (m.size() != v.size()) throw ShapeError("AdamState::restore: moment list lengths differ");
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i].shape() != v[i].shape()) {
      throw ShapeError("AdamState::restore: moment shapes differ for parameter " + std::to_string(i));
    }
  }
  AdamState s;
  s.config_ = config;
  s.steps_ = steps;
  s.m_ = std::move(m);
  s.v_ = std::move(v);
  return s;
}

std::string AdamState::label(std::size_t i) const {
  if (i < names_.size()) return "'" + names_[i] + "'";
  return "#" + std::to_string(i);
}

void AdamState::step(std::span<Tensor> params, std::span<const Tensor> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw ShapeError("adam: expected " + std::to_string(m_.size()) + " parameters, got " +
                     std::to_string(params.size()) + " parameters and " +
                     std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != m_[i].shape() || grads[i].shape() != m_[i].shape()) {
      throw ShapeError("adam: parameter " + label(i) + " has shape " + params[i].shape_string() +
                       ", gradient " + grads[i].shape_string() + ", state " +
                       m_[i].shape_string());
    }
    if (!grads[i].all_finite()) {
      throw NumericError("adam: non-finite gradient for parameter " + label(i));
    }
  }

  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    auto g = grads[i].data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

}  // namespace gcrdp::kernel
