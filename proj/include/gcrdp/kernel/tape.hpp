// Copyright 2026 The gcrdp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode differentiation over the fixed operation set in tensor.hpp.
//
// A Tape is an append-only list of nodes. Each recorded operation stores its
// output value and the ids of its inputs, which always precede it, so the
// recording order is already a topological order. backward() walks the list
// once in reverse.

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "gcrdp/kernel/tensor.hpp"

namespace gcrdp::kernel {

struct NodeId {
  std::size_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

enum class Op {
  kVariable,
  kConstant,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kScale,
  kWeightedRowMean,
  kExp,
  kLog,
  kLogSumExp,
  kL2Normalize,
  kCosine,
  kSqDist,
  kMaskedMean,
  kSum,
  kConcatRows,
  kConcatCols,
};

const char* op_name(Op op);

class Tape {
 public:
  // A leaf. Trainable leaves receive gradients from backward().
  NodeId variable(Tensor value, bool trainable = true);
  // A leaf that never receives a gradient.
  NodeId constant(Tensor value);

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);
  NodeId weighted_row_mean(NodeId x, NodeId weights);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId logsumexp_rows(NodeId a);
  NodeId l2_normalize_rows(NodeId a);
  NodeId cosine(NodeId a, NodeId b);
  NodeId sq_dist(NodeId a, NodeId b);
  // The mask is a constant; no gradient flows through the selection.
  NodeId masked_mean(NodeId a, Tensor mask);
  NodeId sum(NodeId a);
  NodeId concat_rows(std::span<const NodeId> parts);
  NodeId concat_cols(std::span<const NodeId> parts);
  NodeId concat_rows(std::initializer_list<NodeId> parts) { return concat_rows(std::span(parts.begin(), parts.size())); }
  NodeId concat_cols(std::initializer_list<NodeId> parts) { return concat_cols(std::span(parts.begin(), parts.size())); }

  // Populates gradients of every node with respect to `loss`, which must be
  // 1 x 1. Previous gradients are discarded. Nodes that do not feed the loss
  // end with zero gradients.
  void backward(NodeId loss);

  const Tensor& value(NodeId id) const;
  // Zero-shaped like value(id) until backward() has run.
  const Tensor& grad(NodeId id) const;
  Op op(NodeId id) const;
  bool trainable(NodeId id) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  void clear() noexcept { nodes_.clear(); }

 private:
  struct Node {
    Op op;
    std::vector<std::size_t> inputs;
    Tensor value;
    Tensor grad;
    Tensor aux;  // mask for masked_mean
    double factor = 0.0;
    bool trainable = false;
    bool needs_grad = false;
  };

  NodeId push(Op op, std::vector<std::size_t> inputs, Tensor value);
  const Node& node(NodeId id) const;
  void propagate(const Node& n);

  std::vector<Node> nodes_;
};

}  // namespace gcrdp::kernel
