// Copyright (c) 2026, The CDWF Authors
// SPDX-License-Identifier: Apache-2.0
//
// 1D residual classifier: stem -> BasicBlock1d x B -> global average pool -> linear.
//
// Trainability is managed per block. The stem belongs to the parameter group of
// block 0, so "all blocks kept" means every base parameter is trainable. The
// head is trainable unless explicitly frozen by a caller.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdwf/layers.hpp"

namespace cdwf {

struct NetworkConfig {
  std::size_t input_length = 300;
  std::size_t in_channels = 1;
  std::size_t stem_channels = 32;
  std::size_t stem_kernel = 7;
  std::size_t stem_stride = 2;
  std::vector<std::size_t> block_channels{32, 32, 64, 64, 128, 128, 256, 256};
  std::size_t num_classes = 2;

  /// Reference architecture with every width multiplied by `width_scale` (min 1 channel).
  static NetworkConfig scaled(double width_scale);

  void validate() const;
  nlohmann::json to_json() const;
  static NetworkConfig from_json(const nlohmann::json& j);
};

/// Trainable / total parameter counts.
struct ParamCount {
  std::size_t trainable = 0;
  std::size_t total = 0;
};

class Network {
 public:
  Network() = default;
  Network(const NetworkConfig& config, std::uint64_t init_seed);

  /// batch {N, 1, L} -> logits {N, classes}. Caches activations for backward.
  Tensor forward(const Tensor& batch, Mode mode);
  /// Backpropagates dL/dlogits, accumulating into trainable parameters' gradients.
  void backward(const Tensor& dlogits);

  const NetworkConfig& config() const noexcept { return config_; }
  std::size_t num_blocks() const noexcept { return blocks_.size(); }
  BasicBlock1d& block(std::size_t i) { return blocks_.at(i); }
  const BasicBlock1d& block(std::size_t i) const { return blocks_.at(i); }
  Stem& stem() noexcept { return stem_; }
  Head& head() noexcept { return head_; }

  /// Base parameters of block i's group (block 0 includes the stem).
  std::vector<Parameter*> block_parameters(std::size_t i);
  std::vector<const Parameter*> block_parameters(std::size_t i) const;
  std::vector<Parameter*> head_parameters() { return head_.parameters(); }
  std::vector<const Parameter*> head_parameters() const { return head_.parameters(); }
  /// All base parameters in canonical order (stem, blocks, head); adapters excluded.
  std::vector<Parameter*> base_parameters();
  std::vector<const Parameter*> base_parameters() const;
  /// Adapter parameters in block order.
  std::vector<Parameter*> adapter_parameters();
  std::vector<const Parameter*> adapter_parameters() const;
  /// base_parameters() followed by adapter_parameters().
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::vector<Parameter*> trainable_parameters();
  /// Batch-norm layers in canonical order (for running-statistics persistence).
  std::vector<BatchNorm1d*> batch_norms();

  void set_block_trainable(std::size_t i, bool on);
  bool block_trainable(std::size_t i) const { return blocks_.at(i).trainable(); }
  void set_all_trainable(bool on);
  void set_head_trainable(bool on);

  /// Attaches rank-r adapters to conv2 of each listed block and freezes those
  /// blocks' base parameters. Throws on double attachment or a bad index.
  void attach_lora(std::span<const std::size_t> blocks, std::size_t rank, std::uint64_t seed,
                   double alpha = 0.0);
  bool has_lora(std::size_t i) const { return blocks_.at(i).conv2.has_lora(); }

  void zero_grad();

  /// Counts from the current trainability flags (adapters count toward trainable only).
  ParamCount count_trainable_flags() const;
  std::size_t total_base_parameters() const;

 private:
  NetworkConfig config_;
  Stem stem_;
  std::vector<BasicBlock1d> blocks_;
  Head head_;
  bool cached_ = false;
};

/// Parameter cost table derived from the architecture; independent of current flags.
struct BlockCosts {
  std::size_t head = 0;
  std::size_t total = 0;                  // all base parameters
  std::vector<std::size_t> block;         // base parameters per block group
  std::vector<std::size_t> adapter_unit;  // c_out + c_in * k of each block's conv2

  std::size_t adapter_params(std::size_t block_index, std::size_t rank) const {
    return rank * adapter_unit.at(block_index);
  }
};

BlockCosts block_costs(const Network& model);

/// p_train = head + blocks in `kept` + rank-r adapters on blocks in `frozen`;
/// p_total = all base parameters. Throws ConfigError when the sets overlap.
ParamCount count_params(const BlockCosts& costs, std::span<const std::size_t> kept,
                        std::span<const std::size_t> frozen, std::size_t rank);
ParamCount count_params(const Network& model, std::span<const std::size_t> kept,
                        std::span<const std::size_t> frozen, std::size_t rank);

}  // namespace cdwf
