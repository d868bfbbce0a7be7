// Copyright 2026 The gcrdp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <random>
#include <vector>

#include "gcrdp/kernel/tape.hpp"
#include "oracles.hpp"

namespace testing {

using gcrdp::kernel::NodeId;
using gcrdp::kernel::Tape;
using gcrdp::kernel::Tensor;

inline Tensor random_tensor(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = scale * std::normal_distribution<double>(0.0, 1.0)(rng);
  return Tensor::matrix(rows, cols, std::move(v));
}

inline oracle::Mat to_mat(const Tensor& t) {
  oracle::Mat m;
  for (std::size_t r = 0; r < t.rows(); ++r) m.emplace_back(t.row_span(r).begin(), t.row_span(r).end());
  return m;
}

using Builder = std::function<NodeId(Tape&, const std::vector<NodeId>&)>;

// Largest relative error between tape gradients and central differences
// over all inputs of `build`.
inline double gradient_check(const std::vector<Tensor>& inputs, const Builder& build, double h = 1e-3) {
  Tape tape;
  std::vector<NodeId> ids;
  for (const Tensor& t : inputs) ids.push_back(tape.variable(t));
  tape.backward(build(tape, ids));

  double worst = 0.0;
  for (std::size_t which = 0; which < inputs.size(); ++which) {
    const Tensor& g = tape.grad(ids[which]);
    auto f = [&](const oracle::Vec& x) {
      std::vector<Tensor> moved = inputs;
      moved[which] = Tensor::matrix(inputs[which].rows(), inputs[which].cols(), x);
      Tape t;
      std::vector<NodeId> v;
      for (const Tensor& m : moved) v.push_back(t.variable(m));
      return t.value(build(t, v)).item();
    };
    const oracle::Vec x(inputs[which].data().begin(), inputs[which].data().end());
    const oracle::Vec numeric = oracle::numeric_gradient(f, x, h);
    worst = std::max(worst, oracle::gradient_error(oracle::Vec(g.data().begin(), g.data().end()), numeric));
  }
  return worst;
}

}  // namespace testing
