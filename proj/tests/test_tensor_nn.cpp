// Copyright (c) 2026, The CDWF Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "cdwf/cdwf.hpp"
#include "cdwf/error.hpp"
#include "cdwf/network.hpp"
#include "cdwf/rng.hpp"
#include "oracles.hpp"

namespace cdwf {
namespace {

NetworkConfig toy_config(std::vector<std::size_t> blocks = {8, 8}, std::size_t length = 24) {
  NetworkConfig c;
  c.input_length = length;
  c.stem_channels = 8;
  c.stem_kernel = 5;
  c.stem_stride = 2;
  c.block_channels = std::move(blocks);
  return c;
}

Tensor random_batch(std::size_t n, std::size_t length, std::uint64_t seed) {
  Tensor x({n, 1, length});
  Substream rng(seed, 0, StreamTag::Init);
  for (double& v : x.values()) v = rng.normal();
  return x;
}

std::vector<int> alternating_labels(std::size_t n) {
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % 2);
  return y;
}

// Moves batch-norm state away from the identity so oracles exercise it.
void perturb_batch_norms(Network& net, std::uint64_t seed) {
  Substream rng(seed, 1, StreamTag::Init);
  for (BatchNorm1d* bn : net.batch_norms()) {
    for (double& v : bn->gamma.value.values()) v = rng.uniform(0.5, 1.5);
    for (double& v : bn->beta.value.values()) v = rng.uniform(-0.3, 0.3);
    for (double& v : bn->running_mean) v = rng.uniform(-0.2, 0.2);
    for (double& v : bn->running_var) v = rng.uniform(0.5, 2.0);
  }
}

void randomize_lora_b(Network& net, std::uint64_t seed) {
  Substream rng(seed, 2, StreamTag::Lora);
  for (std::size_t i = 0; i < net.num_blocks(); ++i)
    if (auto* a = net.block(i).conv2.lora())
      for (double& v : a->b.value.values()) v = 0.1 * rng.normal();
}

TEST(Forward, MatchesDirectConvolutionOracle) {
  for (auto blocks : {std::vector<std::size_t>{8, 8}, std::vector<std::size_t>{8, 16}}) {
    Network net(toy_config(blocks), 5);
    perturb_batch_norms(net, 5);
    const Tensor x = random_batch(3, 24, 6);
    const Tensor got = net.forward(x, Mode::Eval);
    const Tensor want = oracle::reference_forward(net, x);
    ASSERT_EQ(got.shape(), want.shape());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-10);
  }
}

TEST(Forward, ZeroHeadGivesZeroLogits) {
  Network net(toy_config(), 1);
  net.head().weight.value.fill(0.0);
  net.head().bias.value.fill(0.0);
  const Tensor logits = net.forward(random_batch(4, 24, 2), Mode::Eval);
  for (double v : logits.values()) EXPECT_EQ(v, 0.0);
}

TEST(Forward, DuplicateExamplesGiveIdenticalRows) {
  Network net(toy_config(), 1);
  Tensor x = random_batch(3, 24, 3);
  std::copy(x.data(), x.data() + 24, x.data() + 2 * 24);
  const Tensor logits = net.forward(x, Mode::Eval);
  EXPECT_NEAR(logits[0], logits[4], 1e-12);
  EXPECT_NEAR(logits[1], logits[5], 1e-12);
}

TEST(Forward, RejectsWrongShape) {
  Network net(toy_config(), 1);
  EXPECT_THROW(net.forward(Tensor({2, 1, 23}), Mode::Eval), ConfigError);
  EXPECT_THROW(net.backward(Tensor({2, 2})), ConfigError);
}

TEST(Gradcheck, AllParametersTrainMode) {
  Network net(toy_config(), 11);
  perturb_batch_norms(net, 11);
  const auto r = oracle::gradcheck(net, random_batch(4, 24, 12), alternating_labels(4), Mode::Train);
  EXPECT_GT(r.checked, 800u);
  EXPECT_LT(r.max_rel_error, 1e-5) << r.worst;
}

TEST(Gradcheck, DownsampleBlockEvalMode) {
  Network net(toy_config({8, 16}), 13);
  perturb_batch_norms(net, 13);
  const auto r = oracle::gradcheck(net, random_batch(4, 24, 14), alternating_labels(4), Mode::Eval);
  EXPECT_LT(r.max_rel_error, 1e-5) << r.worst;
}

TEST(Gradcheck, FrozenBlockWithAdapter) {
  Network net(toy_config(), 15);
  perturb_batch_norms(net, 15);
  const std::vector<std::size_t> frozen{1};
  net.attach_lora(frozen, 2, 16);
  randomize_lora_b(net, 16);
  const auto r = oracle::gradcheck(net, random_batch(4, 24, 17), alternating_labels(4), Mode::Train);
  EXPECT_LT(r.max_rel_error, 1e-5) << r.worst;
}

TEST(Backward, ZeroBInitGivesZeroGradForA) {
  Network net(toy_config(), 3);
  const std::vector<std::size_t> all{0, 1};
  net.attach_lora(all, 2, 4);
  net.zero_grad();
  net.backward(cross_entropy(net.forward(random_batch(4, 24, 5), Mode::Train), alternating_labels(4)).grad);
  for (std::size_t i = 0; i < 2; ++i) {
    const LoraAdapter* a = net.block(i).conv2.lora();
    for (double g : a->a.grad.values()) EXPECT_EQ(g, 0.0);
    double norm = 0.0;
    for (double g : a->b.grad.values()) norm += g * g;
    EXPECT_GT(norm, 0.0);
  }
}

TEST(Backward, DisconnectedHeadColumnHasZeroGrad) {
  Network net(toy_config(), 3);
  // With both class rows equal, the loss does not depend on the last block.
  auto& w = net.head().weight.value;
  const std::size_t f = w.dim(1);
  for (std::size_t c = 0; c < f; ++c) w[f + c] = w[c];
  net.zero_grad();
  net.backward(cross_entropy(net.forward(random_batch(4, 24, 5), Mode::Train), alternating_labels(4)).grad);
  for (const Parameter* p : net.block_parameters(1))
    for (double g : p->grad.values()) EXPECT_NEAR(g, 0.0, 1e-13) << p->name;
}

TEST(Lora, AttachIsForwardIdentity) {
  Network net(NetworkConfig::scaled(0.25), 21);
  perturb_batch_norms(net, 21);
  const Tensor x = random_batch(5, 300, 22);
  const Tensor before = net.forward(x, Mode::Eval);
  std::vector<std::size_t> all(net.num_blocks());
  std::iota(all.begin(), all.end(), 0);
  net.attach_lora(all, 4, 23);
  const Tensor after = net.forward(x, Mode::Eval);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_LE(std::abs(before[i] - after[i]), 1e-12);
  EXPECT_TRUE(after.all_finite());
  EXPECT_EQ(net.forward(x, Mode::Eval), after);
  EXPECT_THROW(net.attach_lora(all, 4, 23), ConfigError);
}

TEST(Lora, AdapterCountFormula) {
  Conv1d conv("c", 32, 32, 3, 1);
  Substream rng(1, 0, StreamTag::Lora);
  conv.attach_lora(4, 4.0, rng);
  EXPECT_EQ(conv.lora()->parameter_count(), 512u);
  EXPECT_EQ(conv.lora()->parameter_count(), 4u * (32 + 32 * 3));
}

TEST(Lora, EffectiveWeightConsistency) {
  Network net(toy_config(), 31);
  perturb_batch_norms(net, 31);
  const std::vector<std::size_t> frozen{0, 1};
  net.attach_lora(frozen, 3, 32);
  randomize_lora_b(net, 32);
  const Tensor x = random_batch(3, 24, 33);
  const Tensor got = net.forward(x, Mode::Eval);
  // reference_forward uses a dense convolution with W + scaling * reshape(b a).
  const Tensor want = oracle::reference_forward(net, x);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-10);

  const Conv1d& conv = net.block(0).conv2;
  const LoraAdapter& a = *conv.lora();
  const Tensor w = conv.effective_weight();
  const std::size_t fan_in = conv.in_channels() * conv.kernel();
  for (std::size_t o = 0; o < conv.out_channels(); ++o)
    for (std::size_t j = 0; j < fan_in; ++j) {
      double delta = 0.0;
      for (std::size_t r = 0; r < a.rank; ++r) delta += a.b.value[o * a.rank + r] * a.a.value[r * fan_in + j];
      EXPECT_NEAR(w[o * fan_in + j], conv.weight.value[o * fan_in + j] + a.scaling * delta, 1e-15);
    }
}

TEST(CountParams, EdgeCasesAndEnumeration) {
  Network net(NetworkConfig::scaled(0.5), 1);
  const std::size_t b = net.num_blocks();
  std::vector<std::size_t> all(b);
  std::iota(all.begin(), all.end(), 0);

  const ParamCount full = count_params(net, all, {}, 0);
  EXPECT_EQ(full.trainable, full.total);
  EXPECT_EQ(full.total, net.total_base_parameters());

  const ParamCount head = count_params(net, {}, {}, 0);
  EXPECT_EQ(head.trainable, net.head().weight.size() + net.head().bias.size());

  EXPECT_THROW(count_params(net, std::vector<std::size_t>{1}, std::vector<std::size_t>{1, 2}, 4), ConfigError);

  // Analytic count of (top-1 kept, rest at r = 4) against enumerated flags.
  const std::vector<std::size_t> kept{3};
  std::vector<std::size_t> frozen;
  for (std::size_t i = 0; i < b; ++i)
    if (i != 3) frozen.push_back(i);
  const ParamCount analytic = count_params(net, kept, frozen, 4);
  apply_config(net, {kept, frozen, 4}, 7);
  const ParamCount enumerated = oracle::enumerate_flags(net);
  EXPECT_EQ(analytic.trainable, enumerated.trainable);
  EXPECT_EQ(analytic.total, enumerated.total);
  EXPECT_EQ(net.count_trainable_flags().trainable, enumerated.trainable);
}

TEST(CountParams, UniformLoraMatchesClosedForm) {
  Network net(NetworkConfig::scaled(0.5), 1);
  std::size_t expected = net.head().weight.size() + net.head().bias.size();
  for (std::size_t i = 0; i < net.num_blocks(); ++i) {
    const Conv1d& c = net.block(i).conv2;
    expected += 4 * (c.out_channels() + 3 * c.in_channels());
  }
  build_uniform_lora(net, 4, 9);
  EXPECT_EQ(oracle::enumerate_flags(net).trainable, expected);
  std::size_t trainable_tensors = 0;
  for (Parameter* p : net.trainable_parameters()) {
    (void)p;
    ++trainable_tensors;
  }
  EXPECT_EQ(trainable_tensors, 2 + 2 * net.num_blocks());
}

TEST(Init, SeedDeterminesWeights) {
  Network a(toy_config(), 77), b(toy_config(), 77), c(toy_config(), 78);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->value, pb[i]->value);
    any_diff |= !(pa[i]->value == pc[i]->value);
  }
  EXPECT_TRUE(any_diff);
}

TEST(BatchNorm, FrozenBlockKeepsRunningStats) {
  Network net(toy_config(), 41);
  net.set_block_trainable(1, false);
  const auto mean0 = net.block(1).bn1.running_mean;
  const auto mean_trainable0 = net.block(0).bn1.running_mean;
  net.forward(random_batch(4, 24, 42), Mode::Train);
  EXPECT_EQ(net.block(1).bn1.running_mean, mean0);
  EXPECT_NE(net.block(0).bn1.running_mean, mean_trainable0);
}

TEST(NetworkConfig, ScaledWidthsAndValidation) {
  const NetworkConfig half = NetworkConfig::scaled(0.5);
  EXPECT_EQ(half.stem_channels, 16u);
  const std::vector<std::size_t> expected{16, 16, 32, 32, 64, 64, 128, 128};
  EXPECT_EQ(half.block_channels, expected);
  EXPECT_EQ(NetworkConfig::from_json(half.to_json()).block_channels, expected);
  NetworkConfig bad = half;
  bad.stem_kernel = 4;
  EXPECT_THROW(bad.validate(), ConfigError);
}

}  // namespace
}  // namespace cdwf
