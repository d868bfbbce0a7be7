// Copyright 2026 The gcrdp Authors
// SPDX-License-Identifier: Apache-2.0

#include "gcrdp/kernel/compose.hpp"

#include <string>

#include "gcrdp/error.hpp"

namespace gcrdp::kernel {

NodeId gather_rows(Tape& tape, NodeId matrix, std::span<const std::size_t> rows) {
  const std::size_t n = tape.value(matrix).rows();
  Tensor selector = Tensor::zeros(rows.size(), n);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " out of range for " +
                       tape.value(matrix).shape_string());
    }
    selector(i, rows[i]) = 1.0;
  }
  return tape.matmul(tape.constant(std::move(selector)), matrix);
}

NodeId mean(Tape& tape, NodeId a) {
  const Tensor& v = tape.value(a);
  return tape.masked_mean(a, Tensor(v.shape(), std::vector<double>(v.size(), 1.0)));
}

}  // namespace gcrdp::kernel
