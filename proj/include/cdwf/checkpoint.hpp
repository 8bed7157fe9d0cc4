// Copyright (c) 2026, The CDWF Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint layout:
//   "CDWK" | u32 version | u32 header_len | header JSON | f64 blob (little-endian)
// The header records the architecture, per-block trainability and adapters, and
// the tensor list; the blob holds parameters (canonical order, adapters last)
// followed by batch-norm running means and variances.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdwf/network.hpp"

namespace cdwf {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Network model;
  nlohmann::json config;  // caller-supplied metadata echoed verbatim
};

std::vector<std::uint8_t> encode_checkpoint(const Network& model, const nlohmann::json& config = nlohmann::json::object());
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Network& model, const std::filesystem::path& path,
                     const nlohmann::json& config = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cdwf
