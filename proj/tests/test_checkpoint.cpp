// Copyright (c) 2026, The CDWF Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>

#include "cdwf/cdwf.hpp"
#include "cdwf/checkpoint.hpp"
#include "cdwf/error.hpp"
#include "cdwf/rng.hpp"

namespace cdwf {
namespace {

Tensor batch(std::uint64_t seed) {
  Tensor x({4, 1, 300});
  Substream rng(seed, 0, StreamTag::Init);
  for (double& v : x.values()) v = rng.normal();
  return x;
}

TEST(Checkpoint, ReloadGivesIdenticalForwardAndBytes) {
  Network net(NetworkConfig::scaled(0.25), 3);
  net.forward(batch(1), Mode::Train);  // move running statistics
  const std::vector<std::size_t> frozen{2, 5, 6};
  apply_config(net, {{0, 1, 3, 4, 7}, frozen, 2}, 4);
  for (std::size_t i : frozen)
    for (double& v : net.block(i).conv2.lora()->b.value.values()) v = 0.01;

  const nlohmann::json meta = {{"note", "unit"}};
  const auto bytes = encode_checkpoint(net, meta);
  Checkpoint back = decode_checkpoint(bytes);
  EXPECT_EQ(back.config, meta);
  EXPECT_EQ(back.model.forward(batch(2), Mode::Eval), net.forward(batch(2), Mode::Eval));
  EXPECT_EQ(encode_checkpoint(back.model, meta), bytes);
  for (std::size_t i = 0; i < net.num_blocks(); ++i) {
    EXPECT_EQ(back.model.block_trainable(i), net.block_trainable(i));
    EXPECT_EQ(back.model.has_lora(i), net.has_lora(i));
  }
  EXPECT_EQ(back.model.count_trainable_flags().trainable, net.count_trainable_flags().trainable);
}

TEST(Checkpoint, FileRoundTrip) {
  Network net(NetworkConfig::scaled(0.25), 5);
  const auto path = std::filesystem::temp_directory_path() / "cdwf_ckpt_test" / "m.ckpt";
  save_checkpoint(net, path);
  EXPECT_EQ(load_checkpoint(path).model.forward(batch(3), Mode::Eval), net.forward(batch(3), Mode::Eval));
  std::filesystem::remove_all(path.parent_path());
  EXPECT_THROW(load_checkpoint(path), IoError);
}

TEST(Checkpoint, MalformedBytesAreRejected) {
  Network net(NetworkConfig::scaled(0.25), 5);
  auto bytes = encode_checkpoint(net);
  auto bad = bytes;
  bad[1] = 'Z';
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  EXPECT_THROW(decode_checkpoint(std::span(bytes).first(bytes.size() - 8)), FormatError);
  EXPECT_THROW(decode_checkpoint(std::span(bytes).first(6)), FormatError);
}

}  // namespace
}  // namespace cdwf
