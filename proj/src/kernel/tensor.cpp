// Copyright 2026 The gcrdp Authors
// SPDX-License-Identifier: Apache-2.0

#include "gcrdp/kernel/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

#include "gcrdp/error.hpp"

namespace gcrdp::kernel {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_rank2(const char* op, const Tensor& t) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a rank-2 tensor, got " + t.shape_string());
  }
}

[[noreturn]] void mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                   b.shape_string());
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  require_rank2(op, a);
  require_rank2(op, b);
  if (a.shape() != b.shape()) mismatch(op, a, b);
}

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out = a;
  for (double& x : out.data()) x = f(x);
  return out;
}

template <typename F>
Tensor zip(const char* op, const Tensor& a, const Tensor& b, F f) {
  require_same(op, a, b);
  Tensor out = a;
  auto o = out.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(o[i], y[i]);
  return out;
}

}  // namespace

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (product(shape_) != data_.size()) {
    throw ShapeError("Tensor: shape " + kernel::shape_string(shape_) + " needs " +
                     std::to_string(product(shape_)) + " values, got " +
                     std::to_string(data_.size()));
  }
  cols_ = shape_.empty() ? 1 : shape_.back();
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) { return filled(rows, cols, 0.0); }

Tensor Tensor::filled(std::size_t rows, std::size_t cols, double value) {
  return Tensor({rows, cols}, std::vector<double>(rows * cols, value));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("Tensor::matrix: ragged initializer");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({1, n}, std::move(values));
}

Tensor Tensor::column(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n, 1}, std::move(values));
}

Tensor Tensor::scalar(double value) { return Tensor({1, 1}, {value}); }

Tensor Tensor::identity(std::size_t n) {
  Tensor out = zeros(n, n);
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("Tensor::rows: rank-2 tensor required, got " + shape_string());
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("Tensor::cols: rank-2 tensor required, got " + shape_string());
  return shape_[1];
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("Tensor::item: expected one value, got " + shape_string());
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

std::string Tensor::shape_string() const { return kernel::shape_string(shape_); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  if (a.cols() != b.rows()) mismatch("matmul", a, b);
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Tensor out = Tensor::zeros(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    auto orow = out.row_span(i);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      auto brow = b.row_span(p);
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank2("transpose", a);
  Tensor out = Tensor::zeros(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return zip("add", a, b, [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return zip("sub", a, b, [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return zip("mul", a, b, [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& a, double factor) {
  require_rank2("scale", a);
  return map(a, [factor](double x) { return x * factor; });
}

Tensor weighted_row_mean(const Tensor& x, const Tensor& weights) {
  require_rank2("weighted_row_mean", x);
  require_rank2("weighted_row_mean", weights);
  if (weights.size() != x.rows()) mismatch("weighted_row_mean", x, weights);
  const auto w = weights.data();
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(total > 0.0)) {
    throw NumericError("weighted_row_mean: total weight must be positive, got " +
                       std::to_string(total));
  }
  Tensor out = Tensor::zeros(1, x.cols());
  auto o = out.data();
  for (std::size_t n = 0; n < x.rows(); ++n) {
    auto row = x.row_span(n);
    for (std::size_t j = 0; j < row.size(); ++j) o[j] += w[n] * row[j];
  }
  for (double& v : o) v /= total;
  return out;
}

Tensor exp(const Tensor& a) {
  require_rank2("exp", a);
  return map(a, [](double x) { return std::exp(x); });
}

Tensor log(const Tensor& a) {
  require_rank2("log", a);
  for (double x : a.data()) {
    if (!(x > 0.0)) throw NumericError("log: non-positive input " + std::to_string(x));
  }
  return map(a, [](double x) { return std::log(x); });
}

Tensor logsumexp_rows(const Tensor& a) {
  require_rank2("logsumexp", a);
  if (a.cols() == 0) throw ShapeError("logsumexp: empty rows " + a.shape_string());
  Tensor out = Tensor::zeros(a.rows(), 1);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto row = a.row_span(i);
    const double top = *std::max_element(row.begin(), row.end());
    if (!std::isfinite(top)) {
      out(i, 0) = top;
      continue;
    }
    double acc = 0.0;
    for (double x : row) acc += std::exp(x - top);
    out(i, 0) = top + std::log(acc);
  }
  return out;
}

Tensor l2_normalize_rows(const Tensor& a) {
  require_rank2("l2_normalize", a);
  Tensor out = a;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto row = out.row_span(i);
    const double n = norm(row);
    if (!(n > kMinNorm)) {
      throw NumericError("l2_normalize: row " + std::to_string(i) + " has norm " +
                         std::to_string(n) + " (must exceed 1e-30)");
    }
    for (double& x : row) x /= n;
  }
  return out;
}

Tensor cosine(const Tensor& a, const Tensor& b) {
  require_rank2("cosine", a);
  require_rank2("cosine", b);
  if (a.cols() != b.cols()) mismatch("cosine", a, b);
  const Tensor an = l2_normalize_rows(a);
  const Tensor bn = l2_normalize_rows(b);
  Tensor out = Tensor::zeros(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(an.row_span(i), bn.row_span(j));
  return out;
}

Tensor sq_dist(const Tensor& a, const Tensor& b) {
  require_rank2("sq_dist", a);
  require_rank2("sq_dist", b);
  if (a.cols() != b.cols()) mismatch("sq_dist", a, b);
  Tensor out = Tensor::zeros(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ar = a.row_span(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto br = b.row_span(j);
      double acc = 0.0;
      for (std::size_t p = 0; p < ar.size(); ++p) {
        const double d = ar[p] - br[p];
        acc += d * d;
      }
      out(i, j) = acc;
    }
  }
  return out;
}

Tensor masked_mean(const Tensor& a, const Tensor& mask) {
  require_same("masked_mean", a, mask);
  double acc = 0.0;
  std::size_t count = 0;
  auto x = a.data();
  auto m = mask.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (m[i] != 0.0) {
      acc += x[i];
      ++count;
    }
  }
  return Tensor::scalar(count ? acc / static_cast<double>(count) : 0.0);
}

Tensor sum(const Tensor& a) {
  require_rank2("sum", a);
  auto x = a.data();
  return Tensor::scalar(std::accumulate(x.begin(), x.end(), 0.0));
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t c = parts.front().cols();
  std::size_t r = 0;
  for (const auto& p : parts) {
    require_rank2("concat_rows", p);
    if (p.cols() != c) mismatch("concat_rows", parts.front(), p);
    r += p.rows();
  }
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
  return Tensor::matrix(r, c, std::move(data));
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t r = parts.front().rows();
  std::size_t c = 0;
  for (const auto& p : parts) {
    require_rank2("concat_cols", p);
    if (p.rows() != r) mismatch("concat_cols", parts.front(), p);
    c += p.cols();
  }
  Tensor out = Tensor::zeros(r, c);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < r; ++i)
      std::copy(p.row_span(i).begin(), p.row_span(i).end(), out.row_span(i).begin() + offset);
    offset += p.cols();
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace gcrdp::kernel
