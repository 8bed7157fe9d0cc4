// Copyright (c) 2026, The CDWF Authors
// SPDX-License-Identifier: Apache-2.0
//
// Paired normal/attacked examples, leak-free splits, normalization and the
// on-disk dataset format:
//
//   "CDWF" | u32 version | u32 manifest_len | manifest JSON (UTF-8)
//   | records: u32 id, u8 label, u8 split, 300 x f64   (all little-endian)

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdwf/attack_injector.hpp"
#include "cdwf/pv_simulator.hpp"

namespace cdwf {

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

std::string to_string(Split split);

struct SplitRatios {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

struct SplitAssignment {
  std::map<std::uint32_t, Split> id_to_split;
  SplitRatios ratios;
  std::uint64_t split_seed = 0;

  /// Number of ids per split, indexed by Split.
  std::array<std::size_t, 3> counts() const;
};

/// Deterministic shuffle by `split_seed`; val/test get floor(ratio * n), train the rest.
SplitAssignment assign_splits(std::span<const std::uint32_t> ids, const SplitRatios& ratios,
                              std::uint64_t split_seed);

struct ExampleRecord {
  std::uint32_t id = 0;
  std::uint8_t label = 0;  // 0 normal, 1 attacked
  Split split = Split::Train;
  std::vector<double> samples;
};

struct Normalization {
  double mean = 0.0;
  double std = 1.0;
};

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

struct DatasetManifest {
  AttackKind attack_kind = AttackKind::Bias;
  std::uint64_t global_seed = 0;
  std::uint64_t split_seed = 0;
  std::array<std::size_t, 3> counts{};  // records per split
  Normalization normalization;
  std::uint32_t format_version = kDatasetFormatVersion;
  std::size_t snippet_length = kSnippetLength;

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
};

struct Dataset {
  std::vector<ExampleRecord> records;
  DatasetManifest manifest;
};

/// Mean / population std over training-split samples.
Normalization training_statistics(std::span<const ExampleRecord> records);

/// Standardizes every record with training statistics and stores them in the manifest.
/// Throws ConfigError when the training split is empty or constant.
void normalize(std::vector<ExampleRecord>& records, DatasetManifest& manifest);

/// Inverse of normalize for a single sample vector.
std::vector<double> denormalize(std::span<const double> samples, const Normalization& norm);

/// Simulates, injects, splits and normalizes a full paired corpus.
Dataset build_dataset(AttackKind kind, std::uint64_t global_seed, std::uint64_t split_seed,
                      std::size_t n_ids, const DiodeParams& params = DiodeParams::reference(),
                      std::size_t workers = 1);

/// Same as above with a pre-generated normal corpus (shared across attack kinds).
Dataset build_dataset(AttackKind kind, std::uint64_t global_seed, std::uint64_t split_seed,
                      std::span<const NormalSnippet> corpus);

std::vector<std::uint8_t> encode_dataset(const Dataset& dataset);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);

void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

/// Manifest as a standalone, pretty-printed JSON file.
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Flattened view of one split, ready for batching.
struct ExampleSet {
  std::size_t length = kSnippetLength;
  std::vector<double> inputs;  // size() * length values
  std::vector<int> labels;
  std::vector<std::uint32_t> ids;

  std::size_t size() const { return labels.size(); }
  std::span<const double> example(std::size_t i) const {
    return std::span<const double>(inputs).subspan(i * length, length);
  }
};

ExampleSet select_split(const Dataset& dataset, Split split);

}  // namespace cdwf
