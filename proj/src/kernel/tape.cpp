// Copyright 2026 The gcrdp Authors
// SPDX-License-Identifier: Apache-2.0

#include "gcrdp/kernel/tape.hpp"

#include <cmath>
#include <string>

#include "gcrdp/error.hpp"

namespace gcrdp::kernel {

namespace {

void accumulate(Tensor& into, const Tensor& delta) {
  auto a = into.data();
  auto d = delta.data();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += d[i];
}

// Gradient of y = x / |x| (row-wise) given dy, with y and the row norms.
Tensor normalize_backward(const Tensor& y, const Tensor& x, const Tensor& dy) {
  Tensor dx = Tensor::zeros(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto yr = y.row_span(i);
    auto dyr = dy.row_span(i);
    const double n = norm(x.row_span(i));
    const double proj = dot(yr, dyr);
    auto out = dx.row_span(i);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = (dyr[j] - yr[j] * proj) / n;
  }
  return dx;
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::kVariable: return "variable";
    case Op::kConstant: return "constant";
    case Op::kMatMul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kWeightedRowMean: return "weighted_row_mean";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kLogSumExp: return "logsumexp";
    case Op::kL2Normalize: return "l2_normalize";
    case Op::kCosine: return "cosine";
    case Op::kSqDist: return "sq_dist";
    case Op::kMaskedMean: return "masked_mean";
    case Op::kSum: return "sum";
    case Op::kConcatRows: return "concat_rows";
    case Op::kConcatCols: return "concat_cols";
  }
  return "unknown";
}

NodeId Tape::push(Op op, std::vector<std::size_t> inputs, Tensor value) {
  Node n;
  n.op = op;
  n.inputs = std::move(inputs);
  for (std::size_t i : n.inputs) n.needs_grad = n.needs_grad || nodes_[i].needs_grad;
  n.grad = Tensor(value.shape(), std::vector<double>(value.size(), 0.0));
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return NodeId{nodes_.size() - 1};
}

const Tape::Node& Tape::node(NodeId id) const {
  if (id.index >= nodes_.size()) {
    throw Error("Tape: node " + std::to_string(id.index) + " does not exist (tape has " +
                std::to_string(nodes_.size()) + " nodes)");
  }
  return nodes_[id.index];
}

const Tensor& Tape::value(NodeId id) const { return node(id).value; }
const Tensor& Tape::grad(NodeId id) const { return node(id).grad; }
Op Tape::op(NodeId id) const { return node(id).op; }
bool Tape::trainable(NodeId id) const { return node(id).trainable; }

NodeId Tape::variable(Tensor value, bool trainable) {
  NodeId id = push(Op::kVariable, {}, std::move(value));
  nodes_.back().trainable = trainable;
  nodes_.back().needs_grad = trainable;
  return id;
}

NodeId Tape::constant(Tensor value) { return push(Op::kConstant, {}, std::move(value)); }

NodeId Tape::matmul(NodeId a, NodeId b) {
  return push(Op::kMatMul, {a.index, b.index}, kernel::matmul(value(a), value(b)));
}

NodeId Tape::add(NodeId a, NodeId b) {
  return push(Op::kAdd, {a.index, b.index}, kernel::add(value(a), value(b)));
}

NodeId Tape::sub(NodeId a, NodeId b) {
  return push(Op::kSub, {a.index, b.index}, kernel::sub(value(a), value(b)));
}

NodeId Tape::mul(NodeId a, NodeId b) {
  return push(Op::kMul, {a.index, b.index}, kernel::mul(value(a), value(b)));
}

NodeId Tape::scale(NodeId a, double factor) {
  NodeId id = push(Op::kScale, {a.index}, kernel::scale(value(a), factor));
  nodes_.back().factor = factor;
  return id;
}

NodeId Tape::weighted_row_mean(NodeId x, NodeId weights) {
  return push(Op::kWeightedRowMean, {x.index, weights.index},
              kernel::weighted_row_mean(value(x), value(weights)));
}

NodeId Tape::exp(NodeId a) { return push(Op::kExp, {a.index}, kernel::exp(value(a))); }
NodeId Tape::log(NodeId a) { return push(Op::kLog, {a.index}, kernel::log(value(a))); }

NodeId Tape::logsumexp_rows(NodeId a) {
  return push(Op::kLogSumExp, {a.index}, kernel::logsumexp_rows(value(a)));
}

NodeId Tape::l2_normalize_rows(NodeId a) {
  return push(Op::kL2Normalize, {a.index}, kernel::l2_normalize_rows(value(a)));
}

NodeId Tape::cosine(NodeId a, NodeId b) {
  return push(Op::kCosine, {a.index, b.index}, kernel::cosine(value(a), value(b)));
}

NodeId Tape::sq_dist(NodeId a, NodeId b) {
  return push(Op::kSqDist, {a.index, b.index}, kernel::sq_dist(value(a), value(b)));
}

NodeId Tape::masked_mean(NodeId a, Tensor mask) {
  NodeId id = push(Op::kMaskedMean, {a.index}, kernel::masked_mean(value(a), mask));
  nodes_.back().aux = std::move(mask);
  return id;
}

NodeId Tape::sum(NodeId a) { return push(Op::kSum, {a.index}, kernel::sum(value(a))); }

NodeId Tape::concat_rows(std::span<const NodeId> parts) {
  std::vector<Tensor> values;
  std::vector<std::size_t> inputs;
  for (NodeId p : parts) {
    values.push_back(value(p));
    inputs.push_back(p.index);
  }
  return push(Op::kConcatRows, std::move(inputs), kernel::concat_rows(values));
}

NodeId Tape::concat_cols(std::span<const NodeId> parts) {
  std::vector<Tensor> values;
  std::vector<std::size_t> inputs;
  for (NodeId p : parts) {
    values.push_back(value(p));
    inputs.push_back(p.index);
  }
  return push(Op::kConcatCols, std::move(inputs), kernel::concat_cols(values));
}

void Tape::backward(NodeId loss) {
  const Node& root = node(loss);
  if (root.value.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " + root.value.shape_string());
  }
  for (Node& n : nodes_) {
    for (double& g : n.grad.data()) g = 0.0;
  }
  nodes_[loss.index].grad.data()[0] = 1.0;
  for (std::size_t i = loss.index + 1; i-- > 0;) propagate(nodes_[i]);
}

void Tape::propagate(const Node& n) {
  if (!n.needs_grad) return;
  const Tensor& g = n.grad;
  auto in = [&](std::size_t k) -> Node& { return nodes_[n.inputs[k]]; };

  switch (n.op) {
    case Op::kVariable:
    case Op::kConstant:
      return;

    case Op::kMatMul: {
      Node& a = in(0);
      Node& b = in(1);
      if (a.needs_grad) accumulate(a.grad, kernel::matmul(g, transpose(b.value)));
      if (b.needs_grad) accumulate(b.grad, kernel::matmul(transpose(a.value), g));
      return;
    }
    case Op::kAdd:
      accumulate(in(0).grad, g);
      accumulate(in(1).grad, g);
      return;
    case Op::kSub:
      accumulate(in(0).grad, g);
      accumulate(in(1).grad, kernel::scale(g, -1.0));
      return;
    case Op::kMul: {
      Node& a = in(0);
      Node& b = in(1);
      if (a.needs_grad) accumulate(a.grad, kernel::mul(g, b.value));
      if (b.needs_grad) accumulate(b.grad, kernel::mul(g, a.value));
      return;
    }
    case Op::kScale:
      accumulate(in(0).grad, kernel::scale(g, n.factor));
      return;

    case Op::kWeightedRowMean: {
      Node& x = in(0);
      Node& w = in(1);
      auto wd = w.value.data();
      double total = 0.0;
      for (double v : wd) total += v;
      auto dy = g.row_span(0);
      auto y = n.value.row_span(0);
      auto dw = w.grad.data();
      for (std::size_t r = 0; r < x.value.rows(); ++r) {
        auto xr = x.value.row_span(r);
        auto dxr = x.grad.row_span(r);
        double acc = 0.0;
        for (std::size_t j = 0; j < xr.size(); ++j) {
          dxr[j] += wd[r] / total * dy[j];
          acc += dy[j] * (xr[j] - y[j]);
        }
        dw[r] += acc / total;
      }
      return;
    }

    case Op::kExp:
      accumulate(in(0).grad, kernel::mul(g, n.value));
      return;
    case Op::kLog: {
      Node& a = in(0);
      auto da = a.grad.data();
      auto x = a.value.data();
      auto dy = g.data();
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy[i] / x[i];
      return;
    }
    case Op::kLogSumExp: {
      Node& a = in(0);
      for (std::size_t r = 0; r < a.value.rows(); ++r) {
        auto xr = a.value.row_span(r);
        auto dxr = a.grad.row_span(r);
        const double lse = n.value(r, 0);
        const double dy = g(r, 0);
        for (std::size_t j = 0; j < xr.size(); ++j) dxr[j] += dy * std::exp(xr[j] - lse);
      }
      return;
    }
    case Op::kL2Normalize: {
      Node& a = in(0);
      accumulate(a.grad, normalize_backward(n.value, a.value, g));
      return;
    }
    case Op::kCosine: {
      Node& a = in(0);
      Node& b = in(1);
      const Tensor an = kernel::l2_normalize_rows(a.value);
      const Tensor bn = kernel::l2_normalize_rows(b.value);
      // C = An Bn^T, so dAn = dC Bn and dBn = dC^T An.
      const Tensor dan = kernel::matmul(g, bn);
      const Tensor dbn = kernel::matmul(transpose(g), an);
      if (a.needs_grad) accumulate(a.grad, normalize_backward(an, a.value, dan));
      if (b.needs_grad) accumulate(b.grad, normalize_backward(bn, b.value, dbn));
      return;
    }
    case Op::kSqDist: {
      Node& a = in(0);
      Node& b = in(1);
      for (std::size_t i = 0; i < a.value.rows(); ++i) {
        auto ar = a.value.row_span(i);
        auto dar = a.grad.row_span(i);
        for (std::size_t j = 0; j < b.value.rows(); ++j) {
          auto br = b.value.row_span(j);
          auto dbr = b.grad.row_span(j);
          const double c = 2.0 * g(i, j);
          for (std::size_t p = 0; p < ar.size(); ++p) {
            const double d = c * (ar[p] - br[p]);
            dar[p] += d;
            dbr[p] -= d;
          }
        }
      }
      return;
    }
    case Op::kMaskedMean: {
      Node& a = in(0);
      auto m = n.aux.data();
      std::size_t count = 0;
      for (double v : m) count += (v != 0.0);
      if (count == 0) return;
      const double share = g.item() / static_cast<double>(count);
      auto da = a.grad.data();
      for (std::size_t i = 0; i < da.size(); ++i) {
        if (m[i] != 0.0) da[i] += share;
      }
      return;
    }
    case Op::kSum: {
      const double dy = g.item();
      for (double& v : in(0).grad.data()) v += dy;
      return;
    }
    case Op::kConcatRows: {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        Node& part = in(k);
        auto dp = part.grad.data();
        auto src = g.data().subspan(offset, dp.size());
        for (std::size_t i = 0; i < dp.size(); ++i) dp[i] += src[i];
        offset += dp.size();
      }
      return;
    }
    case Op::kConcatCols: {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        Node& part = in(k);
        const std::size_t c = part.value.cols();
        for (std::size_t r = 0; r < g.rows(); ++r) {
          auto src = g.row_span(r).subspan(offset, c);
          auto dst = part.grad.row_span(r);
          for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
        }
        offset += c;
      }
      return;
    }
  }
}

}  // namespace gcrdp::kernel
