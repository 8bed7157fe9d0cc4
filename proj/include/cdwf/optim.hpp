// Copyright (c) 2026, The CDWF Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cdwf/tensor.hpp"

namespace cdwf {

struct LossResult {
  double loss = 0.0;
  Tensor grad;  // dL/dlogits, same shape as logits
};

/// Mean negative log-softmax of the true class; grad = (softmax - onehot) / n.
LossResult cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Row-wise softmax probability of `cls`.
std::vector<double> class_probability(const Tensor& logits, std::size_t cls);

struct AdamWConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

/// Decoupled weight-decay Adam. Moments are allocated only for the parameters
/// that were trainable at construction; a slot whose parameter has since been
/// frozen is skipped.
class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, AdamWConfig config);

  /// One update with learning rate `lr`:
  ///   p -= lr * wd * p;  m, v updated;  p -= lr * m_hat / (sqrt(v_hat) + eps)
  void step(double lr);

  std::size_t step_count() const noexcept { return step_; }
  std::size_t slot_count() const noexcept { return slots_.size(); }
  /// Parameters owning optimizer state, in construction order.
  std::vector<const Parameter*> tracked() const;
  const AdamWConfig& config() const noexcept { return config_; }

 private:
  struct Slot {
    Parameter* param;
    std::vector<double> m;
    std::vector<double> v;
  };
  std::vector<Slot> slots_;
  AdamWConfig config_;
  std::size_t step_ = 0;
};

/// Cosine decay from `max_lr` at step 0 to 0 at `total_steps`.
double cosine_lr(double max_lr, std::size_t step, std::size_t total_steps);

}  // namespace cdwf
