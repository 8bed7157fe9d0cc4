// Copyright (c) 2026, The CDWF Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdwf/checkpoint.hpp"

#include "cdwf/binary_io.hpp"
#include "cdwf/error.hpp"

namespace cdwf {
namespace {

constexpr std::string_view kMagic = "CDWK";

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Network& model, const nlohmann::json& config) {
  auto& net = const_cast<Network&>(model);
  nlohmann::json header;
  header["format"] = "cdwf-checkpoint";
  header["architecture"] = model.config().to_json();
  header["config"] = config;
  nlohmann::json blocks = nlohmann::json::array();
  for (std::size_t i = 0; i < model.num_blocks(); ++i) {
    const LoraAdapter* lora = model.block(i).conv2.lora();
    blocks.push_back({{"trainable", model.block_trainable(i)},
                      {"lora_rank", lora ? lora->rank : 0},
                      {"lora_scaling", lora ? lora->scaling : 0.0}});
  }
  header["blocks"] = blocks;
  nlohmann::json tensors = nlohmann::json::array();
  for (const Parameter* p : model.parameters())
    tensors.push_back({{"name", p->name}, {"shape", p->value.shape()}, {"trainable", p->trainable}});
  header["tensors"] = tensors;
  header["batch_norms"] = net.batch_norms().size();

  io::ByteWriter w;
  w.put_bytes(kMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  const std::string text = header.dump();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  w.put_bytes(text);
  for (const Parameter* p : model.parameters()) w.put_doubles(p->value.values());
  for (const BatchNorm1d* bn : net.batch_norms()) {
    w.put_doubles(bn->running_mean);
    w.put_doubles(bn->running_var);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  if (bytes.size() < kMagic.size() || r.get_string(kMagic.size()) != kMagic)
    throw FormatError(FormatError::Kind::BadMagic, "not a CDWF checkpoint (magic mismatch)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw FormatError(FormatError::Kind::BadVersion, "unsupported checkpoint version " + std::to_string(version));
  const auto len = r.get<std::uint32_t>();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.get_string(len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::BadHeader, std::string("malformed checkpoint header: ") + e.what());
  }

  Checkpoint ck;
  try {
    ck.model = Network(NetworkConfig::from_json(header.at("architecture")), 0);
    ck.config = header.at("config");
    const auto& blocks = header.at("blocks");
    if (blocks.size() != ck.model.num_blocks()) throw FormatError(FormatError::Kind::BadHeader, "block count mismatch");
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const auto rank = blocks[i].at("lora_rank").get<std::size_t>();
      if (rank > 0) {
        const std::size_t idx[] = {i};
        ck.model.attach_lora(idx, rank, 0, blocks[i].at("lora_scaling").get<double>() * static_cast<double>(rank));
      }
      ck.model.set_block_trainable(i, blocks[i].at("trainable").get<bool>());
    }
    const auto& tensors = header.at("tensors");
    auto params = ck.model.parameters();
    if (tensors.size() != params.size()) throw FormatError(FormatError::Kind::BadHeader, "tensor count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (tensors[i].at("name").get<std::string>() != params[i]->name ||
          tensors[i].at("shape").get<std::vector<std::size_t>>() != params[i]->value.shape())
        throw FormatError(FormatError::Kind::BadHeader, "tensor layout mismatch at " + params[i]->name);
      params[i]->set_trainable(tensors[i].at("trainable").get<bool>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::BadHeader, std::string("invalid checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(FormatError::Kind::BadHeader, std::string("invalid checkpoint header: ") + e.what());
  }

  std::size_t expected = 0;
  for (const Parameter* p : ck.model.parameters()) expected += p->size();
  for (const BatchNorm1d* bn : ck.model.batch_norms()) expected += 2 * bn->running_mean.size();
  if (r.remaining() != expected * sizeof(double))
    throw FormatError(FormatError::Kind::Truncated, "checkpoint blob size disagrees with header");
  for (Parameter* p : ck.model.parameters()) r.get_doubles(p->value.values());
  for (BatchNorm1d* bn : ck.model.batch_norms()) {
    r.get_doubles(bn->running_mean);
    r.get_doubles(bn->running_var);
  }
  return ck;
}

void save_checkpoint(const Network& model, const std::filesystem::path& path, const nlohmann::json& config) {
  io::write_file(path, encode_checkpoint(model, config));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace cdwf
