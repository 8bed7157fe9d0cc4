// Copyright (c) 2026, The CDWF Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdwf/cdwf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "cdwf/error.hpp"

namespace cdwf {

ImportanceProfile make_importance(std::vector<double> grad_norms, std::size_t n_batches, std::size_t batch_size) {
  ImportanceProfile p;
  double total = 0.0;
  for (double g : grad_norms) {
    if (!(g >= 0.0) || !std::isfinite(g)) throw NumericError("gradient norms must be finite and non-negative");
    total += g;
  }
  if (!(total > 0.0)) throw NumericError("all block gradient norms are zero; importance is undefined");
  p.importance.reserve(grad_norms.size());
  for (double g : grad_norms) p.importance.push_back(g / total);
  p.grad_norms = std::move(grad_norms);
  p.n_batches = n_batches;
  p.batch_size = batch_size;
  return p;
}

ImportanceProfile compute_importance(Network& model, const ExampleSet& val_set, std::size_t n_batches,
                                     std::size_t batch_size) {
  if (val_set.size() == 0) throw ConfigError("validation set is empty");
  if (n_batches == 0 || batch_size == 0) throw ConfigError("importance needs at least one batch");
  for (const Parameter* p : model.base_parameters())
    if (!p->trainable) throw ConfigError("importance requires every base parameter to be trainable");

  const std::size_t available = (val_set.size() + batch_size - 1) / batch_size;
  const std::size_t used = std::min(n_batches, available);
  std::vector<double> sums(model.num_blocks(), 0.0);
  std::vector<std::size_t> idx;
  std::vector<int> labels;
  for (std::size_t b = 0; b < used; ++b) {
    const std::size_t start = b * batch_size;
    const std::size_t end = std::min(val_set.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    labels.assign(val_set.labels.begin() + static_cast<std::ptrdiff_t>(start),
                  val_set.labels.begin() + static_cast<std::ptrdiff_t>(end));

    model.zero_grad();
    const Tensor logits = model.forward(make_batch(val_set, idx), Mode::Eval);
    model.backward(cross_entropy(logits, labels).grad);
    for (std::size_t i = 0; i < model.num_blocks(); ++i) {
      double sq = 0.0;
      for (const Parameter* p : model.block_parameters(i))
        for (double g : p->grad.values()) sq += g * g;
      sums[i] += std::sqrt(sq);
    }
  }
  model.zero_grad();
  for (double& s : sums) s /= static_cast<double>(used);
  return make_importance(std::move(sums), used, batch_size);
}

double eta(std::size_t rank) {
  if (rank == 0) throw ConfigError("eta: rank must be at least 1");
  return std::min(0.5, static_cast<double>(rank) / 8.0);
}

std::vector<std::size_t> rank_blocks(std::span<const double> importance) {
  std::vector<std::size_t> order(importance.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return importance[a] > importance[b]; });
  return order;
}

std::vector<CandidateConfig> enumerate_candidates(std::span<const double> importance,
                                                  std::span<const std::size_t> rank_set) {
  const std::size_t b = importance.size();
  const auto order = rank_blocks(importance);
  std::vector<CandidateConfig> out;
  for (std::size_t k = 0; k <= b; ++k) {
    std::vector<std::size_t> kept(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    std::vector<std::size_t> frozen(order.begin() + static_cast<std::ptrdiff_t>(k), order.end());
    std::sort(kept.begin(), kept.end());
    std::sort(frozen.begin(), frozen.end());
    if (k == b) {
      out.push_back({kept, frozen, 0});
      break;
    }
    for (std::size_t r : rank_set) {
      if (r == 0) throw ConfigError("rank set entries must be at least 1");
      out.push_back({kept, frozen, r});
    }
  }
  return out;
}

CalibrationRecord CalibrationRecord::from_accuracies(double a_warm, double a_ref) {
  if (a_warm < 0.0 || a_warm > 1.0 || a_ref < 0.0 || a_ref > 1.0)
    throw ConfigError("calibration accuracies must lie in [0, 1]");
  return {a_warm, a_ref, a_ref - a_warm};
}

double predict_accuracy(const CandidateConfig& candidate, std::span<const double> importance,
                        const CalibrationRecord& calibration) {
  double kept = 0.0;
  for (std::size_t i : candidate.kept) kept += importance[i];
  double frozen = 0.0;
  for (std::size_t j : candidate.frozen) frozen += importance[j];
  const double adapted = candidate.frozen.empty() ? 0.0 : eta(candidate.rank) * frozen;
  return calibration.a_warm + calibration.gain() * (kept + adapted);
}

double trainable_fraction(const CandidateConfig& candidate, const BlockCosts& costs) {
  const ParamCount c = count_params(costs, candidate.kept, candidate.frozen, candidate.rank);
  return static_cast<double>(c.trainable) / static_cast<double>(c.total);
}

double trainable_fraction(const CandidateConfig& candidate, const Network& model) {
  return trainable_fraction(candidate, block_costs(model));
}

ScoredCandidate select(std::span<const CandidateConfig> candidates, const BlockCosts& costs,
                       std::span<const double> importance, const CalibrationRecord& calibration,
                       const SelectionPolicy& policy) {
  if (!(policy.f_max > 0.0 && policy.f_max <= 1.0)) throw ConfigError("budget f_max must lie in (0, 1]");
  if (!(policy.eps_gain >= 0.0)) throw ConfigError("eps_gain must be non-negative");
  if (candidates.empty()) throw ConfigError("no candidates to select from");

  std::vector<ScoredCandidate> feasible;
  double smallest = std::numeric_limits<double>::infinity();
  for (const CandidateConfig& c : candidates) {
    const double f = trainable_fraction(c, costs);
    smallest = std::min(smallest, f);
    if (f <= policy.f_max) feasible.push_back({c, predict_accuracy(c, importance, calibration), f});
  }
  if (feasible.empty())
    throw InfeasibleBudget("no configuration fits budget f_max=" + std::to_string(policy.f_max) +
                               "; smallest achievable trainable fraction is " + std::to_string(smallest),
                           smallest);

  double best = -std::numeric_limits<double>::infinity();
  for (const auto& s : feasible) best = std::max(best, s.predicted_accuracy);

  const ScoredCandidate* chosen = nullptr;
  for (const auto& s : feasible) {
    if (s.predicted_accuracy < best - policy.eps_gain) continue;
    if (!chosen) {
      chosen = &s;
      continue;
    }
    const auto key = [](const ScoredCandidate& x) {
      return std::tuple(x.trainable_fraction, x.config.k(), x.config.rank);
    };
    if (key(s) < key(*chosen)) chosen = &s;
  }
  return *chosen;
}

nlohmann::json CdwfPlan::to_json() const {
  return {{"kept", config.kept},
          {"frozen", config.frozen},
          {"rank", config.rank},
          {"a_warm", calibration.a_warm},
          {"a_ref", calibration.a_ref},
          {"g_max", calibration.g_max},
          {"importances", importance.importance},
          {"predicted_accuracy", predicted_accuracy},
          {"trainable_fraction", trainable_fraction},
          {"f_max", f_max},
          {"eps_gain", eps_gain},
          {"n_batches", importance.n_batches},
          {"seed", seed}};
}

CdwfPlan CdwfPlan::from_json(const nlohmann::json& j) {
  CdwfPlan p;
  p.config.kept = j.at("kept").get<std::vector<std::size_t>>();
  p.config.frozen = j.at("frozen").get<std::vector<std::size_t>>();
  p.config.rank = j.at("rank").get<std::size_t>();
  p.calibration.a_warm = j.at("a_warm").get<double>();
  p.calibration.a_ref = j.at("a_ref").get<double>();
  p.calibration.g_max = j.at("g_max").get<double>();
  p.importance.importance = j.at("importances").get<std::vector<double>>();
  p.importance.n_batches = j.at("n_batches").get<std::size_t>();
  p.predicted_accuracy = j.at("predicted_accuracy").get<double>();
  p.trainable_fraction = j.at("trainable_fraction").get<double>();
  p.f_max = j.at("f_max").get<double>();
  p.eps_gain = j.at("eps_gain").get<double>();
  p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

void apply_config(Network& model, const CandidateConfig& config, std::uint64_t seed) {
  std::set<std::size_t> all;
  for (std::size_t i : config.kept) all.insert(i);
  for (std::size_t i : config.frozen) {
    if (!all.insert(i).second) throw ConfigError("block " + std::to_string(i) + " is both kept and frozen");
  }
  if (all.size() != model.num_blocks() || (!all.empty() && *all.rbegin() >= model.num_blocks()))
    throw ConfigError("configuration must cover every block exactly once");
  if (!config.frozen.empty() && config.rank == 0) throw ConfigError("frozen blocks need a LoRA rank");

  for (std::size_t i : config.kept) model.set_block_trainable(i, true);
  if (!config.frozen.empty()) model.attach_lora(config.frozen, config.rank, seed);
  model.set_head_trainable(true);
}

void build_uniform_lora(Network& model, std::size_t rank, std::uint64_t seed) {
  std::vector<std::size_t> all(model.num_blocks());
  std::iota(all.begin(), all.end(), 0);
  model.attach_lora(all, rank, seed);
  model.set_head_trainable(true);
}

PhaseResult warm_start(Network& model, const ExampleSet& train_set, const ExampleSet& val_set,
                       std::size_t epochs, const TrainOptions& options, const EpochCallback& on_epoch) {
  if (epochs == 0) throw ConfigError("warm-start needs at least one epoch");
  model.set_all_trainable(true);
  TrainOptions opts = options;
  opts.phase = 1;
  PhaseResult r;
  r.log = train(model, train_set, val_set, epochs, opts, on_epoch);
  r.val_accuracy = r.log.back().val_accuracy;
  return r;
}

PhaseResult finetune(Network& model, const ExampleSet& train_set, const ExampleSet& val_set,
                     std::size_t epochs, const TrainOptions& options, const EpochCallback& on_epoch) {
  TrainOptions opts = options;
  opts.phase = 2;
  PhaseResult r;
  r.log = train(model, train_set, val_set, epochs, opts, on_epoch);
  r.val_accuracy = r.log.empty() ? 0.0 : r.log.back().val_accuracy;
  return r;
}

CdwfPlan make_plan(const Network& warm_model, const ImportanceProfile& importance,
                   const CalibrationRecord& calibration, const PlanOptions& options) {
  if (importance.importance.size() != warm_model.num_blocks())
    throw ConfigError("importance profile length does not match the block count");
  const auto candidates = enumerate_candidates(importance.importance, options.rank_set);
  const ScoredCandidate chosen =
      select(candidates, block_costs(warm_model), importance.importance, calibration, options.policy);
  CdwfPlan plan;
  plan.config = chosen.config;
  plan.predicted_accuracy = chosen.predicted_accuracy;
  plan.trainable_fraction = chosen.trainable_fraction;
  plan.importance = importance;
  plan.calibration = calibration;
  plan.f_max = options.policy.f_max;
  plan.eps_gain = options.policy.eps_gain;
  plan.seed = options.seed;
  return plan;
}

}  // namespace cdwf
