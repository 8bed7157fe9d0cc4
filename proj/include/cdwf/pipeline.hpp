// Copyright (c) 2026, The CDWF Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command implementations behind the `cdwf` executable. Every command reads and
// writes under RunConfig::out_dir:
//
//   data/<attack>.cdwf, data/<attack>.manifest.json
//   checkpoints/pretrain_bias.ckpt
//   checkpoints/<attack>/<tag>.ckpt
//   ref/<attack>.json                  a_ref and reference test metrics
//   cache/<attack>/warm_s<seed>_e<n>.* warm-start model and importance profile
//   plans/<attack>/<tag>.json
//   rows/<attack>/<tag>.json           one report row per run
//   timings/<attack>/<tag>.json        wall-clock seconds (kept out of rows)
//   report/<attack>/...                report.json, report.txt, epochs.csv,
//                                      importance.csv, timings.csv

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdwf/attack_injector.hpp"
#include "cdwf/cdwf.hpp"
#include "cdwf/metrics.hpp"
#include "cdwf/training.hpp"

namespace cdwf {

struct RunConfig {
  std::uint64_t seed = 42;        // data, pretraining and the full-FT reference
  std::uint64_t train_seed = 42;  // warm start, adapters and shuffling of compared runs
  AttackKind attack = AttackKind::Spike;
  std::size_t corpus_size = 1200;
  std::vector<double> budgets{0.02, 0.05, 0.10};
  std::vector<std::size_t> rank_set{1, 2, 4, 8, 16};
  std::size_t e_warm = 3;
  std::size_t e_ft = 7;
  std::size_t e_full = 10;
  std::size_t batch_size = 64;
  double lr = 3e-4;
  double weight_decay = 1e-2;
  double eps_gain = 1e-3;
  std::size_t n_importance_batches = 50;
  double width_scale = 0.5;
  std::filesystem::path out_dir = "runs";
  std::size_t workers = 1;
  bool allow_epoch_mismatch = false;
  bool verbose = true;

  /// Throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
  /// Overlays the keys present in `j` onto defaults; unknown keys are rejected.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);

  TrainOptions train_options(std::uint64_t shuffle_seed) const;
};

/// Paths of every artifact.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path dataset(AttackKind kind) const;
  std::filesystem::path manifest(AttackKind kind) const;
  std::filesystem::path pretrained() const;
  std::filesystem::path checkpoint(AttackKind kind, const std::string& tag) const;
  std::filesystem::path reference(AttackKind kind) const;
  std::filesystem::path warm_model(AttackKind kind, std::uint64_t seed, std::size_t e_warm) const;
  std::filesystem::path warm_profile(AttackKind kind, std::uint64_t seed, std::size_t e_warm) const;
  std::filesystem::path plan(AttackKind kind, const std::string& tag) const;
  std::filesystem::path row(AttackKind kind, const std::string& tag) const;
  std::filesystem::path rows_dir(AttackKind kind) const;
  std::filesystem::path timing(AttackKind kind, const std::string& tag) const;
  std::filesystem::path report_dir(AttackKind kind) const;
};

/// One trained model's raw metrics; report arithmetic is derived from these.
struct RunRow {
  std::string method;  // "full-ft", "lora", "cdwf"
  std::string tag;     // unique per attack
  AttackKind attack = AttackKind::Spike;
  std::uint64_t train_seed = 0;
  double f_max = 0.0;        // cdwf only
  bool forced_rank = false;  // cdwf only
  std::optional<std::size_t> chosen_k;
  std::optional<std::size_t> chosen_r;
  std::vector<std::size_t> kept;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
  double test_auc = 0.0;
  std::size_t param_count = 0;  // trainable
  std::size_t total_params = 0;
  std::size_t e_warm = 0;
  std::size_t e_ft = 0;
  std::vector<EpochRecord> epochs;  // warm epochs first for cdwf
  std::vector<double> importance;
  std::string checkpoint_hash;

  nlohmann::json to_json() const;
  static RunRow from_json(const nlohmann::json& j);
};

struct ReferenceRecord {
  double a_ref = 0.0;
  double test_accuracy = 0.0;
  double test_auc = 0.0;
  std::size_t epochs = 0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static ReferenceRecord from_json(const nlohmann::json& j);
};

std::string row_tag_cdwf(double f_max, bool forced_rank, std::size_t rank, std::uint64_t train_seed,
                         std::size_t e_warm);
std::string row_tag_lora(std::size_t rank, std::uint64_t train_seed);

struct GenDataResult {
  std::array<std::size_t, 3> pairs{};  // ids per split
  std::array<std::size_t, 3> records{};
  std::array<std::size_t, 3> attacked{};
  std::string hash;
};

/// Writes the paired dataset for `kind` (defaults to config.attack).
GenDataResult cmd_gen_data(const RunConfig& config, std::optional<AttackKind> kind = std::nullopt);

struct PretrainResult {
  double val_accuracy = 0.0;
  std::vector<EpochRecord> log;
  std::string hash;
};

/// Trains a fresh network on the bias task for e_full epochs.
PretrainResult cmd_pretrain(const RunConfig& config);

/// Full fine-tuning of the pretrained model on config.attack for e_full epochs.
RunRow cmd_train_ref(const RunConfig& config);

struct CdwfRunResult {
  RunRow row;
  CdwfPlan plan;
};

/// Warm start (cached per train_seed and e_warm), importance, selection,
/// adapter attachment and fine-tuning. With `forced_rank` the rank set is {rank}.
CdwfRunResult cmd_run_cdwf(const RunConfig& config, double f_max, std::optional<std::size_t> forced_rank = {});

/// Uniform LoRA on every block at `rank`, e_full epochs from the pretrained model.
RunRow cmd_run_lora(const RunConfig& config, std::size_t rank);

/// Trainable fraction of uniform LoRA at `rank` for the configured architecture.
double uniform_lora_fraction(const RunConfig& config, std::size_t rank);

/// Test-split metrics of a checkpoint on config.attack.
EvalResult cmd_eval(const RunConfig& config, const std::filesystem::path& checkpoint);

struct ReportLine {
  RunRow row;
  double retention = 0.0;        // percent of the full-FT test AUC
  double param_reduction = 0.0;  // full-FT trainable / method trainable
  double trainable_pct = 0.0;
};

struct RunReport {
  std::vector<ReportLine> lines;
  nlohmann::json config;
  nlohmann::json artifacts;
};

/// Collects rows for config.attack, orders them and writes the report files.
/// Throws ConfigError without a full-FT row.
RunReport cmd_report(const RunConfig& config);

/// Pure part of cmd_report: ordering and derived columns.
RunReport build_report(std::vector<RunRow> rows);
std::string format_report_text(const RunReport& report);

struct SweepPoint {
  std::size_t e_warm = 0;
  std::size_t e_ft = 0;
  CdwfRunResult result;
};

/// Varies e_warm at a fixed total of e_full epochs for one budget.
std::vector<SweepPoint> cmd_sweep_warm(const RunConfig& config, double f_max,
                                       const std::vector<std::size_t>& warm_epochs);

}  // namespace cdwf
