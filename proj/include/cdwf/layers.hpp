// Copyright (c) 2026, The CDWF Authors
// SPDX-License-Identifier: Apache-2.0
//
// Layers of the 1D residual network. Activations use a channel-major layout
// {C, N, L} so that a convolution over the whole batch is a single GEMM on the
// im2col matrix and batch-norm statistics run over contiguous rows.
//
// Every layer caches what its backward pass needs during forward; backward
// accumulates into Parameter::grad for trainable parameters only.

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "cdwf/rng.hpp"
#include "cdwf/tensor.hpp"

namespace cdwf {

enum class Mode { Train, Eval };

/// Low-rank update for a convolution weight viewed as (c_out x c_in*k):
/// delta = scaling * b * a. `b` starts at zero so attaching is a no-op on outputs.
struct LoraAdapter {
  Parameter a;  // (rank x c_in*k)
  Parameter b;  // (c_out x rank)
  std::size_t rank = 0;
  double scaling = 1.0;

  /// r * (c_out + c_in * k)
  std::size_t parameter_count() const noexcept { return a.size() + b.size(); }
};

class Conv1d {
 public:
  Conv1d() = default;
  /// `padding` defaults to kernel / 2 (same length at stride 1). Kernel must be odd.
  Conv1d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         std::size_t stride, bool bias = false);

  /// x: {C_in, N, L} -> {C_out, N, L_out}
  Tensor forward(const Tensor& x);
  /// Returns dL/dx when `need_input_grad`, an empty tensor otherwise.
  Tensor backward(const Tensor& dy, bool need_input_grad);

  std::size_t output_length(std::size_t input_length) const {
    return (input_length + 2 * padding_ - kernel_) / stride_ + 1;
  }

  void attach_lora(std::size_t rank, double alpha, Substream& rng);
  bool has_lora() const noexcept { return lora_.has_value(); }
  LoraAdapter* lora() noexcept { return lora_ ? &*lora_ : nullptr; }
  const LoraAdapter* lora() const noexcept { return lora_ ? &*lora_ : nullptr; }

  /// W + scaling * reshape(b * a), or W when no adapter is attached.
  Tensor effective_weight() const;

  Parameter weight;
  std::optional<Parameter> bias;

  std::size_t in_channels() const noexcept { return in_channels_; }
  std::size_t out_channels() const noexcept { return out_channels_; }
  std::size_t kernel() const noexcept { return kernel_; }
  std::size_t stride() const noexcept { return stride_; }
  std::size_t padding() const noexcept { return padding_; }

 private:
  std::size_t in_channels_ = 0;
  std::size_t out_channels_ = 0;
  std::size_t kernel_ = 1;
  std::size_t stride_ = 1;
  std::size_t padding_ = 0;
  std::optional<LoraAdapter> lora_;

  Tensor col_;       // (c_in*k) x (N*L_out)
  Tensor lora_mid_;  // rank x (N*L_out)
  std::size_t batch_ = 0;
  std::size_t in_length_ = 0;
  std::size_t out_length_ = 0;
};

class BatchNorm1d {
 public:
  BatchNorm1d() = default;
  BatchNorm1d(std::string name, std::size_t channels);

  /// Batch statistics when `use_batch_stats` (running stats are then updated),
  /// running statistics otherwise.
  Tensor forward(const Tensor& x, bool use_batch_stats);
  Tensor backward(const Tensor& dy, bool need_input_grad);

  Parameter gamma;
  Parameter beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double eps = 1e-5;
  double momentum = 0.1;

 private:
  Tensor xhat_;
  std::vector<double> inv_std_;
  bool batch_stats_ = false;
};

/// ReLU with cached activation mask.
class Relu {
 public:
  Tensor forward(Tensor x);
  Tensor backward(Tensor dy) const;

 private:
  std::vector<unsigned char> mask_;
};

class BasicBlock1d {
 public:
  BasicBlock1d() = default;
  BasicBlock1d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t stride);

  /// Batch-norm layers use batch statistics only in Train mode on a trainable block.
  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& dy, bool need_input_grad);

  /// Base parameters (convolutions, batch-norm affines, downsample path).
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  /// Adapter parameters on conv2, empty when no adapter is attached.
  std::vector<Parameter*> adapter_parameters();
  std::vector<const Parameter*> adapter_parameters() const;
  std::vector<BatchNorm1d*> batch_norms();

  void set_trainable(bool on);
  bool trainable() const noexcept { return trainable_; }
  /// True when any parameter of the block (base or adapter) receives gradients.
  bool requires_grad() const;

  Conv1d conv1;
  BatchNorm1d bn1;
  Conv1d conv2;
  BatchNorm1d bn2;
  std::optional<Conv1d> down_conv;
  std::optional<BatchNorm1d> down_bn;

 private:
  bool trainable_ = true;
  Relu relu1_;
  Relu relu_out_;
};

/// Stem convolution + batch-norm + ReLU.
class Stem {
 public:
  Stem() = default;
  Stem(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride);

  Tensor forward(const Tensor& x, bool use_batch_stats);
  Tensor backward(const Tensor& dy, bool need_input_grad);
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  Conv1d conv;
  BatchNorm1d bn;

 private:
  Relu relu_;
};

/// Global average pool over length followed by a linear classifier.
class Head {
 public:
  Head() = default;
  Head(std::size_t features, std::size_t classes);

  /// x: {C, N, L} -> logits {N, classes}
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dlogits);
  std::vector<Parameter*> parameters() { return {&weight, &bias}; }
  std::vector<const Parameter*> parameters() const { return {&weight, &bias}; }

  Parameter weight;  // (classes x features)
  Parameter bias;    // (classes)

 private:
  Tensor pooled_;  // {N, C}
  std::size_t length_ = 0;
};

}  // namespace cdwf
