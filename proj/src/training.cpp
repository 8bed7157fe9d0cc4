// Copyright (c) 2026, The CDWF Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdwf/training.hpp"

#include <algorithm>
#include <numeric>

#include "cdwf/error.hpp"
#include "cdwf/rng.hpp"

namespace cdwf {

Tensor make_batch(const ExampleSet& set, std::span<const std::size_t> indices) {
  Tensor batch({indices.size(), 1, set.length});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto ex = set.example(indices[i]);
    std::copy(ex.begin(), ex.end(), batch.data() + i * set.length);
  }
  return batch;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t phase, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Substream rng(seed, phase * 1'000'000 + epoch, StreamTag::Shuffle);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(0, i - 1)]);
  return order;
}

std::vector<EpochRecord> train(Network& model, const ExampleSet& train_set, const ExampleSet& val_set,
                               std::size_t epochs, const TrainOptions& options, const EpochCallback& on_epoch) {
  if (train_set.size() == 0) throw ConfigError("training set is empty");
  if (val_set.size() == 0) throw ConfigError("validation set is empty");
  if (options.batch_size == 0) throw ConfigError("batch size must be positive");

  AdamW optimizer(model.trainable_parameters(), options.optim);
  const std::size_t n = train_set.size();
  const std::size_t steps_per_epoch = (n + options.batch_size - 1) / options.batch_size;
  const std::size_t total_steps = steps_per_epoch * epochs;

  std::vector<EpochRecord> log;
  std::vector<int> labels;
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    const auto order = epoch_order(n, options.seed, options.phase, epoch);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += options.batch_size) {
      const std::size_t end = std::min(n, start + options.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      labels.resize(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = train_set.labels[idx[i]];

      model.zero_grad();
      const Tensor logits = model.forward(make_batch(train_set, idx), Mode::Train);
      const LossResult loss = cross_entropy(logits, labels);
      model.backward(loss.grad);
      optimizer.step(cosine_lr(options.optim.lr, optimizer.step_count(), total_steps));
      loss_sum += loss.loss * static_cast<double>(idx.size());
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.val_accuracy = accuracy(predict_logits(model, val_set), val_set.labels);
    log.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return log;
}

Tensor predict_logits(Network& model, const ExampleSet& set, std::size_t batch_size) {
  const std::size_t n = set.size();
  const std::size_t classes = model.config().num_classes;
  Tensor out({n, classes});
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor logits = model.forward(make_batch(set, idx), Mode::Eval);
    std::copy(logits.data(), logits.data() + logits.size(), out.data() + start * classes);
  }
  return out;
}

EvalResult evaluate(Network& model, const ExampleSet& set, std::size_t batch_size) {
  const Tensor logits = predict_logits(model, set, batch_size);
  EvalResult r;
  r.n_examples = set.size();
  r.accuracy = accuracy(logits, set.labels);
  r.auc = roc_auc(class_probability(logits, 1), set.labels);
  return r;
}

}  // namespace cdwf
