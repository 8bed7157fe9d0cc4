// Copyright (c) 2026, The CDWF Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cdwf/tensor.hpp"

namespace cdwf {

struct EvalResult {
  double accuracy = 0.0;
  double auc = 0.0;
  std::size_t n_examples = 0;
  std::string score_definition = "softmax probability of class 1";
};

/// Row-wise argmax of {N, classes}; ties resolve toward the lower class.
std::vector<int> argmax_predictions(const Tensor& logits);

/// Fraction of matching entries. Throws ConfigError on empty or mismatched input.
double accuracy(std::span<const int> predictions, std::span<const int> labels);
double accuracy(const Tensor& logits, std::span<const int> labels);

/// Mann-Whitney statistic P(s+ > s-) + 0.5 P(s+ = s-) via average-rank sums.
/// Throws ConfigError when only one class is present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// 100 * method / reference.
double retention(double method_metric, double reference_metric);

/// full / method trainable counts.
double param_reduction(double p_train_full, double p_train_method);

}  // namespace cdwf
