// Copyright (c) 2026, The CDWF Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdwf/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "cdwf/error.hpp"

namespace cdwf {

std::vector<int> argmax_predictions(const Tensor& logits) {
  if (logits.rank() != 2) throw ConfigError("argmax_predictions: expected {N, classes}");
  const std::size_t n = logits.dim(0);
  const std::size_t k = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = logits.data() + i * k;
    out[i] = static_cast<int>(std::max_element(z, z + k) - z);  // first maximum wins
  }
  return out;
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.empty() || predictions.size() != labels.size())
    throw ConfigError("accuracy: inputs must be non-empty and of equal length");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double accuracy(const Tensor& logits, std::span<const int> labels) {
  return accuracy(argmax_predictions(logits), labels);
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ConfigError("roc_auc: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double positive_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1 .. j
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] == 1) {
        positive_rank_sum += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ConfigError("roc_auc: both classes must be present");
  const double np = static_cast<double>(n_pos);
  const double u = positive_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

double retention(double method_metric, double reference_metric) {
  if (!(reference_metric > 0.0)) throw ConfigError("retention: reference metric must be positive");
  return 100.0 * method_metric / reference_metric;
}

double param_reduction(double p_train_full, double p_train_method) {
  if (!(p_train_method > 0.0)) throw ConfigError("param_reduction: method parameter count must be positive");
  return p_train_full / p_train_method;
}

}  // namespace cdwf
