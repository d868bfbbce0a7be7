// Copyright 2026 The gcrdp Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>

#include "gcrdp/error.hpp"
#include "gcrdp/kernel/adam.hpp"
#include "gcrdp/kernel/compose.hpp"
#include "gcrdp/kernel/tape.hpp"
#include "support.hpp"

using namespace gcrdp;
using kernel::Tensor;
using testing::gradient_check;
using testing::random_tensor;

TEST_CASE("tensor construction checks the element count") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  const Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  CHECK(m(1, 2) == 6);
  CHECK(kernel::transpose(m)(2, 1) == 6);
}

TEST_CASE("forward spot values") {
  CHECK(kernel::logsumexp_rows(Tensor::row({0, 0})).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const Tensor n = kernel::l2_normalize_rows(Tensor::row({3, 4}));
  CHECK(n(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(n(0, 1) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK_THROWS_AS(kernel::l2_normalize_rows(Tensor::row({0, 0})), NumericError);
  CHECK_THROWS_AS(kernel::log(Tensor::row({1, 0})), NumericError);

  const Tensor big = Tensor::row({1000, 1000});
  CHECK(kernel::logsumexp_rows(big).item() == doctest::Approx(1000 + std::log(2.0)));

  const Tensor c = kernel::cosine(Tensor::matrix({{1, 0}, {1, 1}}), Tensor::matrix({{2, 0}, {0, 3}, {-1, 0}}));
  CHECK(c.rows() == 2);
  CHECK(c.cols() == 3);
  CHECK(c(0, 0) == doctest::Approx(1.0));
  CHECK(c(0, 1) == doctest::Approx(0.0));
  CHECK(c(0, 2) == doctest::Approx(-1.0));
  CHECK(c(1, 1) == doctest::Approx(1.0 / std::sqrt(2.0)));

  const Tensor d = kernel::sq_dist(Tensor::row({0, 0}), Tensor::matrix({{3, 4}, {1, 0}}));
  CHECK(d(0, 0) == 25);
  CHECK(d(0, 1) == 1);

  CHECK(kernel::masked_mean(Tensor::row({1, 2, 3}), Tensor::row({1, 0, 1})).item() == 2);
  CHECK(kernel::masked_mean(Tensor::row({1, 2, 3}), Tensor::row({0, 0, 0})).item() == 0);
}

TEST_CASE("shape mismatches are reported") {
  CHECK_THROWS_AS(kernel::matmul(Tensor::zeros(2, 3), Tensor::zeros(2, 3)), ShapeError);
  CHECK_THROWS_AS(kernel::add(Tensor::zeros(2, 3), Tensor::zeros(3, 2)), ShapeError);
  kernel::Tape tape;
  const auto a = tape.variable(Tensor::zeros(2, 2));
  CHECK_THROWS_AS(tape.backward(a), ShapeError);
}

TEST_CASE("every tape op matches central differences") {
  std::mt19937_64 rng(11);
  using kernel::NodeId;
  using kernel::Tape;
  using V = std::vector<NodeId>;
  const double tol = 1e-6;

  // Each case reduces its op to a scalar through a fixed random weighting so
  // every output entry matters.
  auto reduce = [](Tape& t, NodeId x, std::uint64_t seed) {
    std::mt19937_64 r(seed);
    const Tensor& v = t.value(x);
    const Tensor w = random_tensor(r, v.rows(), v.cols());
    return t.sum(t.mul(x, t.constant(w)));
  };

  SUBCASE("matmul") {
    CHECK(gradient_check({random_tensor(rng, 3, 4), random_tensor(rng, 4, 2)},
                         [&](Tape& t, const V& v) { return reduce(t, t.matmul(v[0], v[1]), 1); }) < tol);
  }
  SUBCASE("add sub mul scale") {
    CHECK(gradient_check({random_tensor(rng, 2, 3), random_tensor(rng, 2, 3)}, [&](Tape& t, const V& v) {
            return reduce(t, t.scale(t.mul(t.add(v[0], v[1]), t.sub(v[0], v[1])), 0.7), 2);
          }) < tol);
  }
  SUBCASE("weighted_row_mean") {
    Tensor w = random_tensor(rng, 5, 1);
    for (double& x : w.data()) x = std::abs(x) + 0.1;
    CHECK(gradient_check({random_tensor(rng, 5, 3), w},
                         [&](Tape& t, const V& v) { return reduce(t, t.weighted_row_mean(v[0], v[1]), 3); }) < tol);
  }
  SUBCASE("exp and log") {
    Tensor pos = random_tensor(rng, 2, 3);
    for (double& x : pos.data()) x = std::abs(x) + 0.5;
    CHECK(gradient_check({pos}, [&](Tape& t, const V& v) { return reduce(t, t.log(t.exp(t.log(v[0]))), 4); }) <
          tol);
  }
  SUBCASE("logsumexp_rows") {
    CHECK(gradient_check({random_tensor(rng, 3, 4, 3.0)},
                         [&](Tape& t, const V& v) { return reduce(t, t.logsumexp_rows(v[0]), 5); }) < tol);
  }
  SUBCASE("l2_normalize_rows and cosine") {
    CHECK(gradient_check({random_tensor(rng, 3, 4)},
                         [&](Tape& t, const V& v) { return reduce(t, t.l2_normalize_rows(v[0]), 6); }) < tol);
    CHECK(gradient_check({random_tensor(rng, 3, 4), random_tensor(rng, 2, 4)},
                         [&](Tape& t, const V& v) { return reduce(t, t.cosine(v[0], v[1]), 7); }) < tol);
  }
  SUBCASE("sq_dist") {
    CHECK(gradient_check({random_tensor(rng, 3, 4), random_tensor(rng, 2, 4)},
                         [&](Tape& t, const V& v) { return reduce(t, t.sq_dist(v[0], v[1]), 8); }) < tol);
  }
  SUBCASE("masked_mean, concat and gather") {
    CHECK(gradient_check({random_tensor(rng, 2, 3), random_tensor(rng, 1, 3), random_tensor(rng, 2, 2)},
                         [&](Tape& t, const V& v) {
                           const NodeId rows = t.concat_rows({v[0], v[1]});
                           const NodeId cols = t.concat_cols({v[0], v[2]});
                           const std::size_t pick[] = {2, 0, 2};
                           const NodeId g = kernel::gather_rows(t, rows, pick);
                           const NodeId a = t.masked_mean(t.mul(g, g), Tensor::matrix({{1, 0, 1}, {0, 1, 1}, {1, 1, 0}}));
                           return t.add(a, reduce(t, cols, 9));
                         }) < tol);
  }
}

TEST_CASE("constant inputs receive no gradient") {
  kernel::Tape tape;
  const auto w = tape.variable(Tensor::matrix({{1, 2}, {3, 4}}));
  const auto c = tape.constant(Tensor::matrix({{1, 1}}));
  tape.backward(tape.sum(tape.matmul(c, w)));
  CHECK(tape.grad(c) == Tensor::zeros(1, 2));
  CHECK(tape.grad(w) == Tensor::matrix({{1, 1}, {1, 1}}));
}

TEST_CASE("adam step matches the bias-corrected update") {
  std::vector<Tensor> params{Tensor::row({1.0, -2.0})};
  kernel::AdamState adam(params, kernel::AdamConfig{0.1});
  const std::vector<Tensor> grads{Tensor::row({0.5, -4.0})};
  adam.step(params, grads);
  // With one step, m_hat = g and v_hat = g^2, so the move is lr * g / (|g| + eps).
  CHECK(params[0](0, 0) == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-14));
  CHECK(params[0](0, 1) == doctest::Approx(-2.0 + 0.1 * 4.0 / (4.0 + 1e-8)).epsilon(1e-14));
  CHECK(adam.steps() == 1);

  // Second step against a naive recurrence.
  const std::vector<Tensor> grads2{Tensor::row({-1.0, 2.0})};
  const double b1 = 0.9, b2 = 0.999;
  double m = (1 - b1) * 0.5, v = (1 - b2) * 0.25;
  m = b1 * m + (1 - b1) * -1.0;
  v = b2 * v + (1 - b2) * 1.0;
  const double expect = params[0](0, 0) - 0.1 * (m / (1 - b1 * b1)) / (std::sqrt(v / (1 - b2 * b2)) + 1e-8);
  adam.step(params, grads2);
  CHECK(params[0](0, 0) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("adam rejects a non-finite gradient without touching anything") {
  std::vector<Tensor> params{Tensor::row({1.0}), Tensor::row({2.0})};
  kernel::AdamState adam(params);
  adam.set_names({"image_projection", "text_projection"});
  const auto before = params;
  const kernel::AdamState state_before = adam;
  const std::vector<Tensor> grads{Tensor::row({0.1}), Tensor::row({std::numeric_limits<double>::quiet_NaN()})};
  try {
    adam.step(params, grads);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("text_projection") != std::string::npos);
  }
  CHECK(params == before);
  CHECK(adam == state_before);
  const std::vector<Tensor> wrong{Tensor::row({0.1})};
  CHECK_THROWS_AS(adam.step(params, wrong), ShapeError);
}
