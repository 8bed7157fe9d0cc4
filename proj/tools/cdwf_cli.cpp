// Copyright (c) 2026, The CDWF Authors
// SPDX-License-Identifier: Apache-2.0
//
// cdwf <verb> [flags]
//
// Exit codes: 0 success, 2 infeasible budget, 3 invalid config, 4 IO error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cdwf/error.hpp"
#include "cdwf/pipeline.hpp"

namespace {

constexpr int kExitInfeasible = 2;
constexpr int kExitConfig = 3;
constexpr int kExitIo = 4;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> train_seed;
  std::optional<std::string> attack;
  std::vector<double> budgets;
  std::optional<std::size_t> rank;
  std::optional<std::size_t> warm_epochs;
  std::optional<std::size_t> ft_epochs;
  std::optional<std::size_t> full_epochs;
  std::optional<std::string> out;
  std::optional<std::size_t> workers;
  std::optional<std::size_t> corpus_size;
  std::optional<double> width_scale;
  bool allow_epoch_mismatch = false;
  bool quiet = false;
  std::vector<std::size_t> ranks;
  std::vector<std::size_t> warm_list;
  std::string checkpoint;
};

cdwf::RunConfig resolve(const Flags& f) {
  cdwf::RunConfig c = f.config.empty() ? cdwf::RunConfig{} : cdwf::RunConfig::load(f.config);
  if (f.seed) c.seed = c.train_seed = *f.seed;
  if (f.train_seed) c.train_seed = *f.train_seed;
  if (f.attack) c.attack = cdwf::parse_attack_kind(*f.attack);
  if (!f.budgets.empty()) c.budgets = f.budgets;
  if (f.warm_epochs) c.e_warm = *f.warm_epochs;
  if (f.full_epochs) c.e_full = *f.full_epochs;
  if (f.ft_epochs) {
    c.e_ft = *f.ft_epochs;
  } else if (f.warm_epochs && c.e_warm < c.e_full) {
    c.e_ft = c.e_full - c.e_warm;
  }
  if (f.out) c.out_dir = *f.out;
  if (f.workers) c.workers = *f.workers;
  if (f.corpus_size) c.corpus_size = *f.corpus_size;
  if (f.width_scale) c.width_scale = *f.width_scale;
  if (f.allow_epoch_mismatch) c.allow_epoch_mismatch = true;
  if (f.quiet) c.verbose = false;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Budget-aware block freezing with low-rank adapters for 1D PV attack detection"};
  app.require_subcommand(1);
  Flags f;

  const auto common = [&f](CLI::App* sub) {
    sub->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", f.seed, "global seed (data, pretraining, reference; default 42)");
    sub->add_option("--train-seed", f.train_seed, "seed of compared runs (defaults to --seed)");
    sub->add_option("--attack", f.attack, "bias | drift | spike");
    sub->add_option("--budget", f.budgets, "trainable-fraction budget(s) f_max");
    sub->add_option("--rank", f.rank, "LoRA rank (run-lora) or forced rank (run-cdwf)");
    sub->add_option("--warm-epochs", f.warm_epochs, "warm-start epochs");
    sub->add_option("--ft-epochs", f.ft_epochs, "fine-tuning epochs after the warm start");
    sub->add_option("--full-epochs", f.full_epochs, "total epochs of full-FT, LoRA and pretraining");
    sub->add_option("--out", f.out, "output directory");
    sub->add_option("--workers", f.workers, "dataset generation threads");
    sub->add_option("--corpus-size", f.corpus_size, "number of snippet ids");
    sub->add_option("--width-scale", f.width_scale, "network width multiplier");
    sub->add_flag("--allow-epoch-mismatch", f.allow_epoch_mismatch, "skip the warm + ft = full check");
    sub->add_flag("-q,--quiet", f.quiet, "suppress progress output");
  };

  auto* gen = app.add_subcommand("gen-data", "simulate, inject and write the paired dataset");
  auto* pre = app.add_subcommand("pretrain", "train the bias-task source model");
  auto* ref = app.add_subcommand("train-ref", "full fine-tuning reference on the target attack");
  auto* run = app.add_subcommand("run-cdwf", "warm start, select under budget, fine-tune");
  auto* lora = app.add_subcommand("run-lora", "uniform LoRA baseline");
  auto* eval = app.add_subcommand("eval", "test metrics of a checkpoint");
  auto* rep = app.add_subcommand("report", "collect rows into report tables and CSVs");
  auto* sweep = app.add_subcommand("sweep-warm", "vary warm-start epochs at a fixed total");
  for (auto* s : {gen, pre, ref, run, lora, eval, rep, sweep}) common(s);
  lora->add_option("--ranks", f.ranks, "rank sweep (overrides --rank)");
  eval->add_option("--checkpoint", f.checkpoint, "checkpoint file")->required();
  sweep->add_option("--warm-list", f.warm_list, "warm-epoch values (default 1..e_full-1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    const cdwf::RunConfig c = resolve(f);
    if (*gen) {
      cdwf::cmd_gen_data(c);
    } else if (*pre) {
      cdwf::cmd_pretrain(c);
    } else if (*ref) {
      cdwf::cmd_train_ref(c);
    } else if (*run) {
      for (double b : c.budgets) cdwf::cmd_run_cdwf(c, b, f.rank);
    } else if (*lora) {
      std::vector<std::size_t> ranks = f.ranks;
      if (ranks.empty()) ranks = f.rank ? std::vector<std::size_t>{*f.rank} : c.rank_set;
      for (std::size_t r : ranks) cdwf::cmd_run_lora(c, r);
    } else if (*eval) {
      cdwf::cmd_eval(c, f.checkpoint);
    } else if (*rep) {
      cdwf::cmd_report(c);
    } else if (*sweep) {
      std::vector<std::size_t> warm = f.warm_list;
      if (warm.empty())
        for (std::size_t w = 1; w < c.e_full; ++w) warm.push_back(w);
      for (double b : c.budgets) cdwf::cmd_sweep_warm(c, b, warm);
    }
  } catch (const cdwf::InfeasibleBudget& e) {
    std::fprintf(stderr, "infeasible budget: %s\n", e.what());
    return kExitInfeasible;
  } catch (const cdwf::ConfigError& e) {
    std::fprintf(stderr, "invalid config: %s\n", e.what());
    return kExitConfig;
  } catch (const cdwf::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kExitIo;
  } catch (const cdwf::FormatError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
