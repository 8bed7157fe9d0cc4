// Copyright (c) 2026, The CDWF Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdwf/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cdwf/error.hpp"

namespace cdwf {

LossResult cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size())
    throw ConfigError("cross_entropy: logits must be {N, classes} with N labels");
  const std::size_t n = logits.dim(0);
  const std::size_t k = logits.dim(1);
  LossResult out;
  out.grad = Tensor(logits.shape());
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k) throw ConfigError("cross_entropy: label out of range");
    const double* z = logits.data() + i * k;
    const double zmax = *std::max_element(z, z + k);
    double sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) sum += std::exp(z[c] - zmax);
    const double lse = zmax + std::log(sum);
    total += lse - z[y];
    for (std::size_t c = 0; c < k; ++c) {
      const double p = std::exp(z[c] - lse);
      out.grad[i * k + c] = (p - (static_cast<std::size_t>(y) == c ? 1.0 : 0.0)) * inv_n;
    }
  }
  out.loss = total * inv_n;
  return out;
}

std::vector<double> class_probability(const Tensor& logits, std::size_t cls) {
  const std::size_t n = logits.dim(0);
  const std::size_t k = logits.dim(1);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = logits.data() + i * k;
    const double zmax = *std::max_element(z, z + k);
    double sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) sum += std::exp(z[c] - zmax);
    out[i] = std::exp(z[cls] - zmax) / sum;
  }
  return out;
}

AdamW::AdamW(std::vector<Parameter*> params, AdamWConfig config) : config_(config) {
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    slots_.push_back({p, std::vector<double>(p->size(), 0.0), std::vector<double>(p->size(), 0.0)});
  }
}

void AdamW::step(double lr) {
  ++step_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  const double decay = 1.0 - lr * config_.weight_decay;
  for (Slot& s : slots_) {
    Parameter& p = *s.param;
    if (!p.trainable || !p.has_grad()) continue;
    double* w = p.value.data();
    const double* g = p.grad.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      w[i] *= decay;
      s.m[i] = b1 * s.m[i] + (1.0 - b1) * g[i];
      s.v[i] = b2 * s.v[i] + (1.0 - b2) * g[i] * g[i];
      const double m_hat = s.m[i] / bc1;
      const double v_hat = s.v[i] / bc2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

std::vector<const Parameter*> AdamW::tracked() const {
  std::vector<const Parameter*> out;
  for (const Slot& s : slots_) out.push_back(s.param);
  return out;
}

double cosine_lr(double max_lr, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0) return max_lr;
  const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return 0.5 * max_lr * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace cdwf
