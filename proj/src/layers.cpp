// Copyright (c) 2026, The CDWF Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdwf/layers.hpp"

#include <cmath>

#include <Eigen/Core>

#include "cdwf/error.hpp"

namespace cdwf {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

void ensure_grad(Parameter& p) {
  if (p.trainable && !p.has_grad()) p.zero_grad();
}

void require_shape(const Tensor& x, std::size_t channels, const char* layer) {
  if (x.rank() != 3 || x.dim(0) != channels)
    throw ConfigError(std::string(layer) + ": expected {" + std::to_string(channels) +
                      ", N, L} input, got " + x.shape_string());
}

void add_into(Tensor& dst, const Tensor& src) {
  double* d = dst.data();
  const double* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

}  // namespace

// ---------------------------------------------------------------- Conv1d

Conv1d::Conv1d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
               std::size_t stride, bool with_bias)
    : weight(name + ".weight", Tensor({out_channels, in_channels, kernel})),
      in_channels_(in_channels),
      out_channels_(out_channels),
      kernel_(kernel),
      stride_(stride),
      padding_(kernel / 2) {
  if (kernel % 2 == 0) throw ConfigError("convolution kernel size must be odd");
  if (stride == 0) throw ConfigError("convolution stride must be positive");
  if (with_bias) bias.emplace(name + ".bias", Tensor({out_channels}));
}

void Conv1d::attach_lora(std::size_t rank, double alpha, Substream& rng) {
  if (lora_) throw ConfigError(weight.name + ": LoRA adapter already attached");
  if (rank == 0) throw ConfigError("LoRA rank must be at least 1");
  const std::string base = weight.name.substr(0, weight.name.rfind('.'));
  const std::size_t fan_in = in_channels_ * kernel_;
  LoraAdapter adapter;
  adapter.rank = rank;
  adapter.scaling = alpha / static_cast<double>(rank);
  adapter.a = Parameter(base + ".lora_a", Tensor({rank, fan_in}));
  adapter.b = Parameter(base + ".lora_b", Tensor({out_channels_, rank}));
  const double sigma = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : adapter.a.value.values()) v = sigma * rng.normal();
  lora_ = std::move(adapter);
}

Tensor Conv1d::effective_weight() const {
  Tensor w = weight.value;
  if (!lora_) return w;
  const std::size_t fan_in = in_channels_ * kernel_;
  MatMap W(w.data(), out_channels_, fan_in);
  ConstMatMap A(lora_->a.value.data(), lora_->rank, fan_in);
  ConstMatMap B(lora_->b.value.data(), out_channels_, lora_->rank);
  W.noalias() += lora_->scaling * (B * A);
  return w;
}

Tensor Conv1d::forward(const Tensor& x) {
  require_shape(x, in_channels_, "Conv1d");
  batch_ = x.dim(1);
  in_length_ = x.dim(2);
  if (in_length_ + 2 * padding_ < kernel_) throw ConfigError("Conv1d: input shorter than kernel");
  out_length_ = output_length(in_length_);
  const std::size_t rows = in_channels_ * kernel_;
  const std::size_t cols = batch_ * out_length_;

  col_ = Tensor({rows, cols});
  for (std::size_t ci = 0; ci < in_channels_; ++ci) {
    for (std::size_t kk = 0; kk < kernel_; ++kk) {
      double* row = col_.data() + (ci * kernel_ + kk) * cols;
      for (std::size_t n = 0; n < batch_; ++n) {
        const double* src = x.data() + (ci * batch_ + n) * in_length_;
        double* dst = row + n * out_length_;
        for (std::size_t l = 0; l < out_length_; ++l) {
          const auto pos = static_cast<std::ptrdiff_t>(l * stride_ + kk) - static_cast<std::ptrdiff_t>(padding_);
          dst[l] = (pos >= 0 && pos < static_cast<std::ptrdiff_t>(in_length_)) ? src[pos] : 0.0;
        }
      }
    }
  }

  Tensor y({out_channels_, batch_, out_length_});
  MatMap Y(y.data(), out_channels_, cols);
  ConstMatMap W(weight.value.data(), out_channels_, rows);
  ConstMatMap C(col_.data(), rows, cols);
  Y.noalias() = W * C;
  if (lora_) {
    lora_mid_ = Tensor({lora_->rank, cols});
    MatMap M(lora_mid_.data(), lora_->rank, cols);
    ConstMatMap A(lora_->a.value.data(), lora_->rank, rows);
    ConstMatMap B(lora_->b.value.data(), out_channels_, lora_->rank);
    M.noalias() = A * C;
    Y.noalias() += lora_->scaling * (B * M);
  }
  if (bias) {
    for (std::size_t co = 0; co < out_channels_; ++co) Y.row(co).array() += bias->value[co];
  }
  return y;
}

Tensor Conv1d::backward(const Tensor& dy, bool need_input_grad) {
  if (col_.empty()) throw ConfigError(weight.name + ": backward called without a cached forward pass");
  const std::size_t rows = in_channels_ * kernel_;
  const std::size_t cols = batch_ * out_length_;
  if (dy.size() != out_channels_ * cols) throw ConfigError(weight.name + ": gradient shape mismatch");
  ConstMatMap dY(dy.data(), out_channels_, cols);
  ConstMatMap C(col_.data(), rows, cols);

  if (weight.trainable) {
    ensure_grad(weight);
    MatMap dW(weight.grad.data(), out_channels_, rows);
    dW.noalias() += dY * C.transpose();
  }
  if (bias && bias->trainable) {
    ensure_grad(*bias);
    for (std::size_t co = 0; co < out_channels_; ++co) bias->grad[co] += dY.row(co).sum();
  }

  RowMat dmid;
  if (lora_) {
    ConstMatMap A(lora_->a.value.data(), lora_->rank, rows);
    ConstMatMap B(lora_->b.value.data(), out_channels_, lora_->rank);
    ConstMatMap M(lora_mid_.data(), lora_->rank, cols);
    if (lora_->b.trainable) {
      ensure_grad(lora_->b);
      MatMap dB(lora_->b.grad.data(), out_channels_, lora_->rank);
      dB.noalias() += lora_->scaling * (dY * M.transpose());
    }
    if (lora_->a.trainable || need_input_grad) {
      dmid.noalias() = lora_->scaling * (B.transpose() * dY);
    }
    if (lora_->a.trainable) {
      ensure_grad(lora_->a);
      MatMap dA(lora_->a.grad.data(), lora_->rank, rows);
      dA.noalias() += dmid * C.transpose();
    }
  }

  if (!need_input_grad) return Tensor();

  RowMat dcol(rows, cols);
  ConstMatMap W(weight.value.data(), out_channels_, rows);
  dcol.noalias() = W.transpose() * dY;
  if (lora_) {
    ConstMatMap A(lora_->a.value.data(), lora_->rank, rows);
    dcol.noalias() += A.transpose() * dmid;
  }

  Tensor dx({in_channels_, batch_, in_length_});
  for (std::size_t ci = 0; ci < in_channels_; ++ci) {
    for (std::size_t kk = 0; kk < kernel_; ++kk) {
      const double* row = dcol.data() + (ci * kernel_ + kk) * cols;
      for (std::size_t n = 0; n < batch_; ++n) {
        double* dst = dx.data() + (ci * batch_ + n) * in_length_;
        const double* src = row + n * out_length_;
        for (std::size_t l = 0; l < out_length_; ++l) {
          const auto pos = static_cast<std::ptrdiff_t>(l * stride_ + kk) - static_cast<std::ptrdiff_t>(padding_);
          if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(in_length_)) dst[pos] += src[l];
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------- BatchNorm1d

BatchNorm1d::BatchNorm1d(std::string name, std::size_t channels)
    : gamma(name + ".gamma", Tensor({channels}, 1.0)),
      beta(name + ".beta", Tensor({channels}, 0.0)),
      running_mean(channels, 0.0),
      running_var(channels, 1.0) {}

Tensor BatchNorm1d::forward(const Tensor& x, bool use_batch_stats) {
  const std::size_t channels = gamma.size();
  require_shape(x, channels, "BatchNorm1d");
  const std::size_t m = x.dim(1) * x.dim(2);
  batch_stats_ = use_batch_stats;
  xhat_ = Tensor(x.shape());
  inv_std_.assign(channels, 0.0);
  Tensor y(x.shape());
  for (std::size_t c = 0; c < channels; ++c) {
    const double* src = x.data() + c * m;
    double mean = 0.0;
    double var = 0.0;
    if (use_batch_stats) {
      for (std::size_t i = 0; i < m; ++i) mean += src[i];
      mean /= static_cast<double>(m);
      for (std::size_t i = 0; i < m; ++i) var += (src[i] - mean) * (src[i] - mean);
      var /= static_cast<double>(m);
      const double unbiased = m > 1 ? var * static_cast<double>(m) / static_cast<double>(m - 1) : var;
      running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mean;
      running_var[c] = (1.0 - momentum) * running_var[c] + momentum * unbiased;
    } else {
      mean = running_mean[c];
      var = running_var[c];
    }
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std_[c] = inv;
    double* xh = xhat_.data() + c * m;
    double* dst = y.data() + c * m;
    const double g = gamma.value[c];
    const double b = beta.value[c];
    for (std::size_t i = 0; i < m; ++i) {
      xh[i] = (src[i] - mean) * inv;
      dst[i] = g * xh[i] + b;
    }
  }
  return y;
}

Tensor BatchNorm1d::backward(const Tensor& dy, bool need_input_grad) {
  if (xhat_.empty()) throw ConfigError(gamma.name + ": backward called without a cached forward pass");
  const std::size_t channels = gamma.size();
  const std::size_t m = xhat_.size() / channels;
  ensure_grad(gamma);
  ensure_grad(beta);
  Tensor dx = need_input_grad ? Tensor(xhat_.shape()) : Tensor();
  for (std::size_t c = 0; c < channels; ++c) {
    const double* d = dy.data() + c * m;
    const double* xh = xhat_.data() + c * m;
    double sum_d = 0.0;
    double sum_dx = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      sum_d += d[i];
      sum_dx += d[i] * xh[i];
    }
    if (gamma.trainable) gamma.grad[c] += sum_dx;
    if (beta.trainable) beta.grad[c] += sum_d;
    if (!need_input_grad) continue;
    const double g = gamma.value[c];
    double* out = dx.data() + c * m;
    if (batch_stats_) {
      const double k = g * inv_std_[c] / static_cast<double>(m);
      const double md = static_cast<double>(m);
      for (std::size_t i = 0; i < m; ++i) out[i] = k * (md * d[i] - sum_d - xh[i] * sum_dx);
    } else {
      const double k = g * inv_std_[c];
      for (std::size_t i = 0; i < m; ++i) out[i] = k * d[i];
    }
  }
  return dx;
}

// ---------------------------------------------------------------- Relu

Tensor Relu::forward(Tensor x) {
  mask_.resize(x.size());
  double* p = x.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask_[i] = p[i] > 0.0;
    if (!mask_[i]) p[i] = 0.0;
  }
  return x;
}

Tensor Relu::backward(Tensor dy) const {
  if (dy.size() != mask_.size()) throw ConfigError("Relu: gradient shape mismatch");
  double* p = dy.data();
  for (std::size_t i = 0; i < dy.size(); ++i)
    if (!mask_[i]) p[i] = 0.0;
  return dy;
}

// ---------------------------------------------------------------- BasicBlock1d

BasicBlock1d::BasicBlock1d(std::string name, std::size_t in_channels, std::size_t out_channels,
                           std::size_t stride)
    : conv1(name + ".conv1", in_channels, out_channels, 3, stride),
      bn1(name + ".bn1", out_channels),
      conv2(name + ".conv2", out_channels, out_channels, 3, 1),
      bn2(name + ".bn2", out_channels) {
  if (stride != 1 || in_channels != out_channels) {
    down_conv.emplace(name + ".downsample.conv", in_channels, out_channels, 1, stride);
    down_bn.emplace(name + ".downsample.bn", out_channels);
  }
}

Tensor BasicBlock1d::forward(const Tensor& x, Mode mode) {
  const bool batch_stats = mode == Mode::Train && trainable_;
  Tensor h = relu1_.forward(bn1.forward(conv1.forward(x), batch_stats));
  h = bn2.forward(conv2.forward(h), batch_stats);
  if (down_conv) {
    add_into(h, down_bn->forward(down_conv->forward(x), batch_stats));
  } else {
    add_into(h, x);
  }
  return relu_out_.forward(std::move(h));
}

Tensor BasicBlock1d::backward(const Tensor& dy, bool need_input_grad) {
  const Tensor d = relu_out_.backward(dy);
  const bool need_lower_main = trainable_ || need_input_grad;

  Tensor dh = conv2.backward(bn2.backward(d, true), need_lower_main);
  Tensor dx;
  if (need_lower_main) {
    dh = relu1_.backward(std::move(dh));
    dx = conv1.backward(bn1.backward(dh, true), need_input_grad);
  }
  if (down_conv) {
    if (trainable_ || need_input_grad) {
      Tensor ds = down_conv->backward(down_bn->backward(d, true), need_input_grad);
      if (need_input_grad) add_into(dx, ds);
    }
  } else if (need_input_grad) {
    add_into(dx, d);
  }
  return dx;
}

std::vector<Parameter*> BasicBlock1d::parameters() {
  std::vector<Parameter*> p{&conv1.weight, &bn1.gamma, &bn1.beta, &conv2.weight, &bn2.gamma, &bn2.beta};
  if (down_conv) {
    p.push_back(&down_conv->weight);
    p.push_back(&down_bn->gamma);
    p.push_back(&down_bn->beta);
  }
  return p;
}

std::vector<const Parameter*> BasicBlock1d::parameters() const {
  auto p = const_cast<BasicBlock1d*>(this)->parameters();
  return {p.begin(), p.end()};
}

std::vector<Parameter*> BasicBlock1d::adapter_parameters() {
  if (auto* l = conv2.lora()) return {&l->a, &l->b};
  return {};
}

std::vector<const Parameter*> BasicBlock1d::adapter_parameters() const {
  auto p = const_cast<BasicBlock1d*>(this)->adapter_parameters();
  return {p.begin(), p.end()};
}

std::vector<BatchNorm1d*> BasicBlock1d::batch_norms() {
  std::vector<BatchNorm1d*> out{&bn1, &bn2};
  if (down_bn) out.push_back(&*down_bn);
  return out;
}

void BasicBlock1d::set_trainable(bool on) {
  trainable_ = on;
  for (Parameter* p : parameters()) p->set_trainable(on);
}

bool BasicBlock1d::requires_grad() const {
  if (trainable_) return true;
  for (const Parameter* p : adapter_parameters())
    if (p->trainable) return true;
  return false;
}

// ---------------------------------------------------------------- Stem

Stem::Stem(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride)
    : conv("stem.conv", in_channels, out_channels, kernel, stride), bn("stem.bn", out_channels) {}

Tensor Stem::forward(const Tensor& x, bool use_batch_stats) {
  return relu_.forward(bn.forward(conv.forward(x), use_batch_stats));
}

Tensor Stem::backward(const Tensor& dy, bool need_input_grad) {
  return conv.backward(bn.backward(relu_.backward(dy), true), need_input_grad);
}

std::vector<Parameter*> Stem::parameters() { return {&conv.weight, &bn.gamma, &bn.beta}; }

std::vector<const Parameter*> Stem::parameters() const { return {&conv.weight, &bn.gamma, &bn.beta}; }

// ---------------------------------------------------------------- Head

Head::Head(std::size_t features, std::size_t classes)
    : weight("head.weight", Tensor({classes, features})), bias("head.bias", Tensor({classes})) {}

Tensor Head::forward(const Tensor& x) {
  const std::size_t features = weight.value.dim(1);
  const std::size_t classes = weight.value.dim(0);
  require_shape(x, features, "Head");
  const std::size_t n = x.dim(1);
  length_ = x.dim(2);
  pooled_ = Tensor({n, features});
  for (std::size_t c = 0; c < features; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      const double* src = x.data() + (c * n + i) * length_;
      double s = 0.0;
      for (std::size_t l = 0; l < length_; ++l) s += src[l];
      pooled_[i * features + c] = s / static_cast<double>(length_);
    }
  }
  Tensor logits({n, classes});
  MatMap Z(logits.data(), n, classes);
  ConstMatMap P(pooled_.data(), n, features);
  ConstMatMap W(weight.value.data(), classes, features);
  Z.noalias() = P * W.transpose();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < classes; ++k) Z(i, k) += bias.value[k];
  return logits;
}

Tensor Head::backward(const Tensor& dlogits) {
  if (pooled_.empty()) throw ConfigError("Head: backward called without a cached forward pass");
  const std::size_t features = weight.value.dim(1);
  const std::size_t classes = weight.value.dim(0);
  const std::size_t n = pooled_.dim(0);
  if (dlogits.size() != n * classes) throw ConfigError("Head: gradient shape mismatch");
  ConstMatMap dZ(dlogits.data(), n, classes);
  ConstMatMap P(pooled_.data(), n, features);
  ConstMatMap W(weight.value.data(), classes, features);
  if (weight.trainable) {
    ensure_grad(weight);
    MatMap dW(weight.grad.data(), classes, features);
    dW.noalias() += dZ.transpose() * P;
  }
  if (bias.trainable) {
    ensure_grad(bias);
    for (std::size_t k = 0; k < classes; ++k) bias.grad[k] += dZ.col(k).sum();
  }
  RowMat dP = dZ * W;  // n x features
  Tensor dx({features, n, length_});
  const double inv_len = 1.0 / static_cast<double>(length_);
  for (std::size_t c = 0; c < features; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double* dst = dx.data() + (c * n + i) * length_;
      const double g = dP(i, c) * inv_len;
      for (std::size_t l = 0; l < length_; ++l) dst[l] = g;
    }
  }
  return dx;
}

}  // namespace cdwf
