// Copyright (c) 2026, The CDWF Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdwf/network.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "cdwf/error.hpp"
#include "cdwf/rng.hpp"

namespace cdwf {

NetworkConfig NetworkConfig::scaled(double width_scale) {
  if (!(width_scale > 0.0)) throw ConfigError("width_scale must be positive");
  NetworkConfig cfg;
  auto scale = [&](std::size_t c) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(c) * width_scale)));
  };
  cfg.stem_channels = scale(cfg.stem_channels);
  for (auto& c : cfg.block_channels) c = scale(c);
  return cfg;
}

void NetworkConfig::validate() const {
  if (block_channels.empty()) throw ConfigError("network needs at least one block");
  if (input_length == 0 || in_channels == 0 || stem_channels == 0 || num_classes < 2)
    throw ConfigError("invalid network dimensions");
  if (stem_kernel % 2 == 0 || stem_stride == 0) throw ConfigError("stem kernel must be odd, stride positive");
  if (std::any_of(block_channels.begin(), block_channels.end(), [](std::size_t c) { return c == 0; }))
    throw ConfigError("block channel counts must be positive");
}

nlohmann::json NetworkConfig::to_json() const {
  return {{"input_length", input_length},   {"in_channels", in_channels}, {"stem_channels", stem_channels},
          {"stem_kernel", stem_kernel},     {"stem_stride", stem_stride}, {"block_channels", block_channels},
          {"num_classes", num_classes}};
}

NetworkConfig NetworkConfig::from_json(const nlohmann::json& j) {
  NetworkConfig c;
  c.input_length = j.at("input_length").get<std::size_t>();
  c.in_channels = j.at("in_channels").get<std::size_t>();
  c.stem_channels = j.at("stem_channels").get<std::size_t>();
  c.stem_kernel = j.at("stem_kernel").get<std::size_t>();
  c.stem_stride = j.at("stem_stride").get<std::size_t>();
  c.block_channels = j.at("block_channels").get<std::vector<std::size_t>>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.validate();
  return c;
}

Network::Network(const NetworkConfig& config, std::uint64_t init_seed) : config_(config) {
  config_.validate();
  stem_ = Stem(config_.in_channels, config_.stem_channels, config_.stem_kernel, config_.stem_stride);
  std::size_t in = config_.stem_channels;
  for (std::size_t i = 0; i < config_.block_channels.size(); ++i) {
    const std::size_t out = config_.block_channels[i];
    const std::size_t stride = out != in ? 2 : 1;
    blocks_.emplace_back("blocks." + std::to_string(i), in, out, stride);
    in = out;
  }
  head_ = Head(in, config_.num_classes);

  Substream rng(init_seed, 0, StreamTag::Init);
  auto kaiming = [&](Conv1d& conv) {
    const double sigma = std::sqrt(2.0 / static_cast<double>(conv.in_channels() * conv.kernel()));
    for (double& v : conv.weight.value.values()) v = sigma * rng.normal();
  };
  kaiming(stem_.conv);
  for (auto& b : blocks_) {
    kaiming(b.conv1);
    kaiming(b.conv2);
    if (b.down_conv) kaiming(*b.down_conv);
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& v : head_.weight.value.values()) v = rng.uniform(-bound, bound);
  for (double& v : head_.bias.value.values()) v = rng.uniform(-bound, bound);
}

Tensor Network::forward(const Tensor& batch, Mode mode) {
  if (batch.rank() != 3 || batch.dim(1) != config_.in_channels || batch.dim(2) != config_.input_length)
    throw ConfigError("network input must be {N, " + std::to_string(config_.in_channels) + ", " +
                      std::to_string(config_.input_length) + "}, got " + batch.shape_string());
  if (!batch.all_finite()) throw NumericError("network input contains non-finite values");
  const std::size_t n = batch.dim(0);
  const std::size_t c = batch.dim(1);
  const std::size_t len = batch.dim(2);
  Tensor x({c, n, len});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      std::copy_n(batch.data() + (i * c + ch) * len, len, x.data() + (ch * n + i) * len);

  x = stem_.forward(x, mode == Mode::Train && block_trainable(0));
  for (auto& b : blocks_) x = b.forward(x, mode);
  Tensor logits = head_.forward(x);
  if (!logits.all_finite()) throw NumericError("network produced non-finite logits");
  cached_ = true;
  return logits;
}

void Network::backward(const Tensor& dlogits) {
  if (!cached_) throw ConfigError("backward called without a preceding forward pass");
  cached_ = false;
  Tensor d = head_.backward(dlogits);
  const auto stem_params = stem_.parameters();
  const bool stem_requires =
      std::any_of(stem_params.begin(), stem_params.end(), [](const Parameter* p) { return p->trainable; });

  // requires_below[i]: anything strictly below block i needs gradients.
  std::vector<bool> requires_below(blocks_.size(), stem_requires);
  for (std::size_t i = 1; i < blocks_.size(); ++i)
    requires_below[i] = requires_below[i - 1] || blocks_[i - 1].requires_grad();

  for (std::size_t i = blocks_.size(); i-- > 0;) {
    if (!blocks_[i].requires_grad() && !requires_below[i]) return;
    d = blocks_[i].backward(d, requires_below[i]);
  }
  if (stem_requires) stem_.backward(d, false);
}

std::vector<Parameter*> Network::block_parameters(std::size_t i) {
  auto p = blocks_.at(i).parameters();
  if (i == 0) {
    auto s = stem_.parameters();
    p.insert(p.begin(), s.begin(), s.end());
  }
  return p;
}

std::vector<const Parameter*> Network::block_parameters(std::size_t i) const {
  auto p = const_cast<Network*>(this)->block_parameters(i);
  return {p.begin(), p.end()};
}

std::vector<Parameter*> Network::base_parameters() {
  std::vector<Parameter*> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    auto p = block_parameters(i);
    out.insert(out.end(), p.begin(), p.end());
  }
  auto h = head_.parameters();
  out.insert(out.end(), h.begin(), h.end());
  return out;
}

std::vector<const Parameter*> Network::base_parameters() const {
  auto p = const_cast<Network*>(this)->base_parameters();
  return {p.begin(), p.end()};
}

std::vector<Parameter*> Network::adapter_parameters() {
  std::vector<Parameter*> out;
  for (auto& b : blocks_) {
    auto p = b.adapter_parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<const Parameter*> Network::adapter_parameters() const {
  auto p = const_cast<Network*>(this)->adapter_parameters();
  return {p.begin(), p.end()};
}

std::vector<Parameter*> Network::parameters() {
  auto out = base_parameters();
  auto a = adapter_parameters();
  out.insert(out.end(), a.begin(), a.end());
  return out;
}

std::vector<const Parameter*> Network::parameters() const {
  auto p = const_cast<Network*>(this)->parameters();
  return {p.begin(), p.end()};
}

std::vector<Parameter*> Network::trainable_parameters() {
  auto all = parameters();
  std::vector<Parameter*> out;
  std::copy_if(all.begin(), all.end(), std::back_inserter(out), [](const Parameter* p) { return p->trainable; });
  return out;
}

std::vector<BatchNorm1d*> Network::batch_norms() {
  std::vector<BatchNorm1d*> out{&stem_.bn};
  for (auto& b : blocks_) {
    auto bn = b.batch_norms();
    out.insert(out.end(), bn.begin(), bn.end());
  }
  return out;
}

void Network::set_block_trainable(std::size_t i, bool on) {
  blocks_.at(i).set_trainable(on);
  if (i == 0)
    for (Parameter* p : stem_.parameters()) p->set_trainable(on);
}

void Network::set_all_trainable(bool on) {
  for (std::size_t i = 0; i < blocks_.size(); ++i) set_block_trainable(i, on);
  set_head_trainable(on);
  for (Parameter* p : adapter_parameters()) p->set_trainable(on);
}

void Network::set_head_trainable(bool on) {
  for (Parameter* p : head_.parameters()) p->set_trainable(on);
}

void Network::attach_lora(std::span<const std::size_t> blocks, std::size_t rank, std::uint64_t seed, double alpha) {
  if (rank == 0) throw ConfigError("LoRA rank must be at least 1");
  std::set<std::size_t> seen;
  for (std::size_t i : blocks) {
    if (i >= blocks_.size()) throw ConfigError("LoRA block index " + std::to_string(i) + " out of range");
    if (!seen.insert(i).second || blocks_[i].conv2.has_lora())
      throw ConfigError("LoRA adapter already attached to block " + std::to_string(i));
  }
  const double a = alpha > 0.0 ? alpha : static_cast<double>(rank);
  for (std::size_t i : blocks) {
    Substream rng(seed, i, StreamTag::Lora);
    blocks_[i].conv2.attach_lora(rank, a, rng);
    set_block_trainable(i, false);
  }
}

void Network::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

ParamCount Network::count_trainable_flags() const {
  ParamCount c;
  for (const Parameter* p : base_parameters()) {
    c.total += p->size();
    if (p->trainable) c.trainable += p->size();
  }
  for (const Parameter* p : adapter_parameters())
    if (p->trainable) c.trainable += p->size();
  return c;
}

std::size_t Network::total_base_parameters() const {
  std::size_t total = 0;
  for (const Parameter* p : base_parameters()) total += p->size();
  return total;
}

BlockCosts block_costs(const Network& model) {
  BlockCosts costs;
  for (const Parameter* p : model.head_parameters()) costs.head += p->size();
  for (std::size_t i = 0; i < model.num_blocks(); ++i) {
    std::size_t s = 0;
    for (const Parameter* p : model.block_parameters(i)) s += p->size();
    costs.block.push_back(s);
    const Conv1d& conv2 = model.block(i).conv2;
    costs.adapter_unit.push_back(conv2.out_channels() + conv2.in_channels() * conv2.kernel());
  }
  costs.total = model.total_base_parameters();
  return costs;
}

ParamCount count_params(const BlockCosts& costs, std::span<const std::size_t> kept,
                        std::span<const std::size_t> frozen, std::size_t rank) {
  std::set<std::size_t> kept_set(kept.begin(), kept.end());
  ParamCount c;
  c.total = costs.total;
  c.trainable = costs.head;
  for (std::size_t i : kept_set) {
    if (i >= costs.block.size()) throw ConfigError("kept block index out of range");
    c.trainable += costs.block[i];
  }
  std::set<std::size_t> frozen_set;
  for (std::size_t i : frozen) {
    if (i >= costs.block.size()) throw ConfigError("frozen block index out of range");
    if (kept_set.count(i)) throw ConfigError("block " + std::to_string(i) + " is both kept and frozen");
    if (frozen_set.insert(i).second) c.trainable += costs.adapter_params(i, rank);
  }
  return c;
}

ParamCount count_params(const Network& model, std::span<const std::size_t> kept,
                        std::span<const std::size_t> frozen, std::size_t rank) {
  return count_params(block_costs(model), kept, frozen, rank);
}

}  // namespace cdwf
