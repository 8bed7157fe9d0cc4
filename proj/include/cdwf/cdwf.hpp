// Copyright (c) 2026, The CDWF Authors
// SPDX-License-Identifier: Apache-2.0
//
// Constraint-Driven Warm-Freeze: warm-start the pretrained model, score blocks
// by validation gradient norms, predict the accuracy of each (kept, frozen,
// rank) configuration, pick the best one that fits the trainable-parameter
// budget, apply it and fine-tune.
//
// Candidate search is linear in the block count: the kept set is always the
// top-k blocks by importance, k = 0..B, crossed with the rank set.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdwf/dataset_store.hpp"
#include "cdwf/network.hpp"
#include "cdwf/training.hpp"

namespace cdwf {

struct ImportanceProfile {
  std::vector<double> grad_norms;  // mean per-block gradient L2 norm
  std::vector<double> importance;  // grad_norms normalized to sum to one
  std::size_t n_batches = 0;
  std::size_t batch_size = 0;
};

/// Normalizes raw per-block norms. Throws NumericError when all norms are zero.
ImportanceProfile make_importance(std::vector<double> grad_norms, std::size_t n_batches = 1,
                                  std::size_t batch_size = 0);

/// Mean per-block gradient norm of the cross-entropy over the first
/// min(n_batches, available) validation batches, in eval mode. Parameters and
/// batch-norm statistics are left untouched; gradients are cleared on return.
/// Requires every base parameter to be trainable.
ImportanceProfile compute_importance(Network& model, const ExampleSet& val_set, std::size_t n_batches,
                                     std::size_t batch_size = 64);

/// LoRA efficiency factor min(0.5, r / 8).
double eta(std::size_t rank);

struct CandidateConfig {
  std::vector<std::size_t> kept;    // ascending block indices
  std::vector<std::size_t> frozen;  // ascending block indices
  std::size_t rank = 0;             // 0 when nothing is frozen

  std::size_t k() const noexcept { return kept.size(); }
  friend bool operator==(const CandidateConfig&, const CandidateConfig&) = default;
};

/// Block indices by descending importance, ties to the lower index.
std::vector<std::size_t> rank_blocks(std::span<const double> importance);

/// k = 0..B-1 crossed with `rank_set`, then the single all-kept candidate.
std::vector<CandidateConfig> enumerate_candidates(std::span<const double> importance,
                                                  std::span<const std::size_t> rank_set);

struct CalibrationRecord {
  double a_warm = 0.0;
  double a_ref = 0.0;
  double g_max = 0.0;  // a_ref - a_warm, unclamped

  static CalibrationRecord from_accuracies(double a_warm, double a_ref);
  /// Gain used by the predictor: max(g_max, 0).
  double gain() const noexcept { return g_max > 0.0 ? g_max : 0.0; }
};

/// a_warm + gain * (sum_{K} I_i + eta(r) * sum_{F} I_j)
double predict_accuracy(const CandidateConfig& candidate, std::span<const double> importance,
                        const CalibrationRecord& calibration);

double trainable_fraction(const CandidateConfig& candidate, const BlockCosts& costs);
double trainable_fraction(const CandidateConfig& candidate, const Network& model);

struct SelectionPolicy {
  double f_max = 0.05;
  /// Near-best tolerance on predicted accuracy: among feasible candidates within
  /// eps_gain of the best prediction, the smallest trainable fraction wins.
  double eps_gain = 1e-3;
};

struct ScoredCandidate {
  CandidateConfig config;
  double predicted_accuracy = 0.0;
  double trainable_fraction = 0.0;
};

/// Budget-constrained choice. Ties after the near-best rule go to smaller
/// trainable fraction, then smaller k, then smaller rank. Throws
/// InfeasibleBudget when no candidate fits.
ScoredCandidate select(std::span<const CandidateConfig> candidates, const BlockCosts& costs,
                       std::span<const double> importance, const CalibrationRecord& calibration,
                       const SelectionPolicy& policy);

struct CdwfPlan {
  CandidateConfig config;
  double predicted_accuracy = 0.0;
  double trainable_fraction = 0.0;
  ImportanceProfile importance;
  CalibrationRecord calibration;
  double f_max = 0.0;
  double eps_gain = 0.0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static CdwfPlan from_json(const nlohmann::json& j);
};

/// Kept blocks trainable; frozen blocks get rank-r adapters on conv2 with their
/// base weights locked; head trainable. Outputs are unchanged at application.
void apply_config(Network& model, const CandidateConfig& config, std::uint64_t seed);

/// Every block frozen with a rank-r adapter; only adapters and head train.
void build_uniform_lora(Network& model, std::size_t rank, std::uint64_t seed);

struct PhaseResult {
  double val_accuracy = 0.0;  // last-epoch validation accuracy
  std::vector<EpochRecord> log;
};

/// Trains every parameter for `epochs` (>= 1) epochs.
PhaseResult warm_start(Network& model, const ExampleSet& train_set, const ExampleSet& val_set,
                       std::size_t epochs, const TrainOptions& options, const EpochCallback& on_epoch = {});

/// Trains the currently trainable parameters for `epochs` epochs.
PhaseResult finetune(Network& model, const ExampleSet& train_set, const ExampleSet& val_set,
                     std::size_t epochs, const TrainOptions& options, const EpochCallback& on_epoch = {});

struct PlanOptions {
  SelectionPolicy policy;
  std::vector<std::size_t> rank_set{1, 2, 4, 8, 16};
  std::uint64_t seed = 42;
};

/// Enumerate + select on a warm-started model's importance profile.
CdwfPlan make_plan(const Network& warm_model, const ImportanceProfile& importance,
                   const CalibrationRecord& calibration, const PlanOptions& options);

}  // namespace cdwf
