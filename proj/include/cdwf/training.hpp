// Copyright (c) 2026, The CDWF Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cdwf/dataset_store.hpp"
#include "cdwf/metrics.hpp"
#include "cdwf/network.hpp"
#include "cdwf/optim.hpp"

namespace cdwf {

struct TrainOptions {
  std::size_t batch_size = 64;
  AdamWConfig optim;
  std::uint64_t seed = 42;
  /// Separates shuffling streams of different training phases under one seed.
  std::uint64_t phase = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Copies the listed examples into a {N, 1, L} batch.
Tensor make_batch(const ExampleSet& set, std::span<const std::size_t> indices);

/// Deterministic permutation of [0, n) for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t phase, std::size_t epoch);

/// Trains the currently trainable parameters for `epochs` epochs with AdamW and a
/// per-run cosine schedule; returns per-epoch validation accuracy (eval mode).
std::vector<EpochRecord> train(Network& model, const ExampleSet& train_set, const ExampleSet& val_set,
                               std::size_t epochs, const TrainOptions& options,
                               const EpochCallback& on_epoch = {});

/// Eval-mode logits for every example.
Tensor predict_logits(Network& model, const ExampleSet& set, std::size_t batch_size = 256);

/// Accuracy and ROC-AUC (score = softmax probability of class 1).
EvalResult evaluate(Network& model, const ExampleSet& set, std::size_t batch_size = 256);

}  // namespace cdwf
