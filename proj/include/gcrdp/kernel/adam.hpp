// Copyright 2026 The gcrdp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gcrdp/kernel/tensor.hpp"

namespace gcrdp::kernel {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction. One instance owns the moment accumulators for a
// fixed list of parameter tensors, matched by position.
class AdamState {
 public:
  AdamState() = default;
  AdamState(std::span<const Tensor> params, AdamConfig config = {});

  // Applies one update in place. Throws ShapeError if the lists do not line
  // up with the accumulators and NumericError, naming the parameter, if a
  // gradient is not finite. Nothing is modified when an error is thrown.
  void step(std::span<Tensor> params, std::span<const Tensor> grads);

  const AdamConfig& config() const noexcept { return config_; }
  void set_learning_rate(double lr) noexcept { config_.learning_rate = lr; }
  std::uint64_t steps() const noexcept { return steps_; }
  const std::vector<Tensor>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor>& second_moments() const noexcept { return v_; }

  // Optional labels used in error messages.
  void set_names(std::vector<std::string> names) { names_ = std::move(names); }

  // Rebuilds a state from serialized parts; shapes of m and v must agree.
  static AdamState restore(AdamConfig config, std::uint64_t steps, std::vector<Tensor> m,
                           std::vector<Tensor> v);

  friend bool operator==(const AdamState& a, const AdamState& b) {
    return a.config_.learning_rate == b.config_.learning_rate && a.config_.beta1 == b.config_.beta1 &&
           a.config_.beta2 == b.config_.beta2 && a.config_.epsilon == b.config_.epsilon &&
           a.steps_ == b.steps_ && a.m_ == b.m_ && a.v_ == b.v_;
  }

 private:
  std::string label(std::size_t i) const;

  AdamConfig config_;
  std::uint64_t steps_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::vector<std::string> names_;
};

}  // namespace gcrdp::kernel
