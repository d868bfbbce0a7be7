// Copyright 2026 The gcrdp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors of doubles and the forward half of the fixed
// operation set. All operations act on rank-2 tensors; a vector is a 1 x n
// row and a scalar is 1 x 1. These functions never touch a tape and are safe
// to call concurrently on disjoint inputs.

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace gcrdp::kernel {

class Tensor {
 public:
  Tensor() = default;

  // Throws ShapeError unless product(shape) == data.size().
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor zeros(std::size_t rows, std::size_t cols);
  static Tensor filled(std::size_t rows, std::size_t cols, double value);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor row(std::vector<double> values);
  static Tensor column(std::vector<double> values);
  static Tensor scalar(double value);
  static Tensor identity(std::size_t n);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  // Extents of a rank-2 tensor. Throws ShapeError for other ranks.
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  // Value of a 1 x 1 tensor. Throws ShapeError otherwise.
  double item() const;

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row_span(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row_span(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  bool all_finite() const noexcept;
  std::string shape_string() const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
  std::size_t cols_ = 0;
};

std::string shape_string(const std::vector<std::size_t>& shape);

// L2-normalize refuses rows whose norm is at or below this.
inline constexpr double kMinNorm = 1e-30;

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

// x: L x d, weights: L entries (row or column). Returns 1 x d.
Tensor weighted_row_mean(const Tensor& x, const Tensor& weights);

Tensor exp(const Tensor& a);
// Throws NumericError on non-positive entries.
Tensor log(const Tensor& a);
// Row-wise, max-shifted. n x m -> n x 1.
Tensor logsumexp_rows(const Tensor& a);
// Row-wise; throws NumericError when a row norm is <= kMinNorm.
Tensor l2_normalize_rows(const Tensor& a);
// a: n x p, b: m x p -> n x m matrix of cosine similarities.
Tensor cosine(const Tensor& a, const Tensor& b);
// a: n x p, b: m x p -> n x m matrix of squared Euclidean distances.
Tensor sq_dist(const Tensor& a, const Tensor& b);
// Mean of the entries where mask != 0; 0 when the mask selects nothing.
Tensor masked_mean(const Tensor& a, const Tensor& mask);
Tensor sum(const Tensor& a);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

}  // namespace gcrdp::kernel
