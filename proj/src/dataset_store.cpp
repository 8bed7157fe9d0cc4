// Copyright (c) 2026, The CDWF Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdwf/dataset_store.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "cdwf/binary_io.hpp"
#include "cdwf/error.hpp"
#include "cdwf/rng.hpp"

namespace cdwf {
namespace {

constexpr std::string_view kMagic = "CDWF";

std::size_t floor_count(double ratio, std::size_t n) {
  // The small epsilon keeps e.g. 0.15 * 1200 from landing at 179.999...
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw FormatError(FormatError::Kind::BadHeader, "unknown split '" + s + "'");
}

}  // namespace

std::string to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "unknown";
}

std::array<std::size_t, 3> SplitAssignment::counts() const {
  std::array<std::size_t, 3> c{};
  for (const auto& [id, split] : id_to_split) ++c[static_cast<std::size_t>(split)];
  return c;
}

SplitAssignment assign_splits(std::span<const std::uint32_t> ids, const SplitRatios& ratios,
                              std::uint64_t split_seed) {
  if (ids.empty()) throw ConfigError("cannot split an empty id list");
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
    throw ConfigError("split ratios must be non-negative and sum to 1");
  if (std::set<std::uint32_t>(ids.begin(), ids.end()).size() != ids.size())
    throw ConfigError("snippet ids must be distinct");

  std::vector<std::uint32_t> order(ids.begin(), ids.end());
  std::sort(order.begin(), order.end());
  Substream rng(split_seed, 0, StreamTag::Split);
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = rng.uniform_int(0, i - 1);
    std::swap(order[i - 1], order[j]);
  }

  const std::size_t n = order.size();
  const std::size_t n_val = floor_count(ratios.val, n);
  const std::size_t n_test = floor_count(ratios.test, n);
  const std::size_t n_train = n - n_val - n_test;

  SplitAssignment out;
  out.ratios = ratios;
  out.split_seed = split_seed;
  for (std::size_t i = 0; i < n; ++i) {
    const Split s = i < n_train ? Split::Train : (i < n_train + n_val ? Split::Val : Split::Test);
    out.id_to_split.emplace(order[i], s);
  }
  return out;
}

nlohmann::json DatasetManifest::to_json() const {
  nlohmann::json j;
  j["attack_kind"] = to_string(attack_kind);
  j["global_seed"] = global_seed;
  j["split_seed"] = split_seed;
  j["counts"] = {{"train", counts[0]}, {"val", counts[1]}, {"test", counts[2]}};
  j["normalization"] = {{"mean", normalization.mean}, {"std", normalization.std}};
  j["format_version"] = format_version;
  j["snippet_length"] = snippet_length;
  return j;
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
  try {
    DatasetManifest m;
    m.attack_kind = parse_attack_kind(j.at("attack_kind").get<std::string>());
    m.global_seed = j.at("global_seed").get<std::uint64_t>();
    m.split_seed = j.at("split_seed").get<std::uint64_t>();
    m.counts = {j.at("counts").at("train").get<std::size_t>(), j.at("counts").at("val").get<std::size_t>(),
                j.at("counts").at("test").get<std::size_t>()};
    m.normalization.mean = j.at("normalization").at("mean").get<double>();
    m.normalization.std = j.at("normalization").at("std").get<double>();
    m.format_version = j.at("format_version").get<std::uint32_t>();
    m.snippet_length = j.at("snippet_length").get<std::size_t>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::BadHeader, std::string("invalid dataset manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(FormatError::Kind::BadHeader, std::string("invalid dataset manifest: ") + e.what());
  }
}

Normalization training_statistics(std::span<const ExampleRecord> records) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& r : records) {
    if (r.split != Split::Train) continue;
    for (double s : r.samples) sum += s;
    count += r.samples.size();
  }
  if (count == 0) throw ConfigError("training split is empty; cannot compute normalization");
  const double mean = sum / static_cast<double>(count);
  double sq = 0.0;
  for (const auto& r : records) {
    if (r.split != Split::Train) continue;
    for (double s : r.samples) sq += (s - mean) * (s - mean);
  }
  const double std = std::sqrt(sq / static_cast<double>(count));
  if (!(std > 0.0)) throw ConfigError("training split has zero variance; cannot normalize");
  return {mean, std};
}

void normalize(std::vector<ExampleRecord>& records, DatasetManifest& manifest) {
  const Normalization norm = training_statistics(records);
  for (auto& r : records)
    for (double& s : r.samples) s = (s - norm.mean) / norm.std;
  manifest.normalization = norm;
}

std::vector<double> denormalize(std::span<const double> samples, const Normalization& norm) {
  std::vector<double> out(samples.size());
  std::transform(samples.begin(), samples.end(), out.begin(),
                 [&](double s) { return s * norm.std + norm.mean; });
  return out;
}

Dataset build_dataset(AttackKind kind, std::uint64_t global_seed, std::uint64_t split_seed,
                      std::span<const NormalSnippet> corpus) {
  std::vector<std::uint32_t> ids;
  ids.reserve(corpus.size());
  for (const auto& s : corpus) ids.push_back(s.id);
  const SplitAssignment splits = assign_splits(ids, SplitRatios{}, split_seed);

  Dataset ds;
  ds.records.reserve(2 * corpus.size());
  for (const auto& normal : corpus) {
    auto [n, attacked] = make_pair(normal, kind, global_seed);
    const Split split = splits.id_to_split.at(normal.id);
    ds.records.push_back({normal.id, 0, split, std::move(n.samples)});
    ds.records.push_back({attacked.id, 1, split, std::move(attacked.samples)});
  }
  std::stable_sort(ds.records.begin(), ds.records.end(), [](const ExampleRecord& a, const ExampleRecord& b) {
    return a.id != b.id ? a.id < b.id : a.label < b.label;
  });

  ds.manifest.attack_kind = kind;
  ds.manifest.global_seed = global_seed;
  ds.manifest.split_seed = split_seed;
  for (const auto& r : ds.records) ++ds.manifest.counts[static_cast<std::size_t>(r.split)];
  normalize(ds.records, ds.manifest);
  return ds;
}

Dataset build_dataset(AttackKind kind, std::uint64_t global_seed, std::uint64_t split_seed,
                      std::size_t n_ids, const DiodeParams& params, std::size_t workers) {
  const auto corpus = generate_corpus(global_seed, n_ids, params, SimulatorOptions{}, workers);
  return build_dataset(kind, global_seed, split_seed, corpus);
}

std::vector<std::uint8_t> encode_dataset(const Dataset& dataset) {
  const auto& m = dataset.manifest;
  const std::size_t total = m.counts[0] + m.counts[1] + m.counts[2];
  if (total != dataset.records.size()) throw ConfigError("manifest counts disagree with record count");

  io::ByteWriter w;
  w.put_bytes(kMagic);
  w.put<std::uint32_t>(m.format_version);
  const std::string manifest = m.to_json().dump();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(manifest.size()));
  w.put_bytes(manifest);
  for (const auto& r : dataset.records) {
    if (r.samples.size() != m.snippet_length) throw ConfigError("record length disagrees with manifest");
    w.put<std::uint32_t>(r.id);
    w.put<std::uint8_t>(r.label);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(r.split));
    w.put_doubles(r.samples);
  }
  return w.take();
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  if (bytes.size() < kMagic.size() || r.get_string(kMagic.size()) != kMagic)
    throw FormatError(FormatError::Kind::BadMagic, "not a CDWF dataset file (magic mismatch)");
  const auto version = r.get<std::uint32_t>();
  if (version != kDatasetFormatVersion)
    throw FormatError(FormatError::Kind::BadVersion,
                      "unsupported dataset format version " + std::to_string(version));
  const auto manifest_len = r.get<std::uint32_t>();
  const std::string manifest_text = r.get_string(manifest_len);

  Dataset ds;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(manifest_text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::BadHeader, std::string("malformed manifest JSON: ") + e.what());
  }
  ds.manifest = DatasetManifest::from_json(j);
  if (ds.manifest.format_version != version)
    throw FormatError(FormatError::Kind::BadVersion, "manifest version disagrees with header");

  const std::size_t length = ds.manifest.snippet_length;
  const std::size_t total = ds.manifest.counts[0] + ds.manifest.counts[1] + ds.manifest.counts[2];
  const std::size_t record_bytes = 4 + 1 + 1 + 8 * length;
  if (r.remaining() != total * record_bytes)
    throw FormatError(FormatError::Kind::Truncated, "record section size disagrees with manifest counts");

  ds.records.resize(total);
  for (auto& rec : ds.records) {
    rec.id = r.get<std::uint32_t>();
    rec.label = r.get<std::uint8_t>();
    const auto split = r.get<std::uint8_t>();
    if (rec.label > 1 || split > 2) throw FormatError(FormatError::Kind::BadHeader, "invalid record tag");
    rec.split = static_cast<Split>(split);
    rec.samples.resize(length);
    r.get_doubles(rec.samples);
  }
  return ds;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  io::write_file(path, encode_dataset(dataset));
}

Dataset read_dataset(const std::filesystem::path& path) { return decode_dataset(io::read_file(path)); }

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  io::write_text(path, manifest.to_json().dump(2) + "\n");
}

ExampleSet select_split(const Dataset& dataset, Split split) {
  ExampleSet set;
  set.length = dataset.manifest.snippet_length;
  for (const auto& r : dataset.records) {
    if (r.split != split) continue;
    set.inputs.insert(set.inputs.end(), r.samples.begin(), r.samples.end());
    set.labels.push_back(r.label);
    set.ids.push_back(r.id);
  }
  return set;
}

}  // namespace cdwf
