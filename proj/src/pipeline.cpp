// Copyright (c) 2026, The CDWF Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdwf/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "cdwf/binary_io.hpp"
#include "cdwf/checkpoint.hpp"
#include "cdwf/dataset_store.hpp"
#include "cdwf/error.hpp"

namespace cdwf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr AttackKind kPretrainTask = AttackKind::Bias;

// Shuffle phases; warm_start and finetune use 1 and 2.
constexpr std::uint64_t kPhasePretrain = 0;
constexpr std::uint64_t kPhaseFull = 3;
constexpr std::uint64_t kPhaseLora = 4;

template <typename... Args>
void say(const RunConfig& config, const char* fmt, Args... args) {
  if (!config.verbose) return;
  std::printf(fmt, args...);
  std::printf("\n");
  std::fflush(stdout);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string hash_file(const fs::path& path) { return io::fnv1a_hex(io::read_file(path)); }

void write_json(const fs::path& path, const json& j) { io::write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing input: " + path.string());
  try {
    return json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw IoError("unreadable JSON in " + path.string() + ": " + e.what());
  }
}

Dataset load_dataset(const RunConfig& config, AttackKind kind) {
  const fs::path path = Layout{config.out_dir}.dataset(kind);
  if (!fs::exists(path))
    throw IoError("missing dataset " + path.string() + " (run gen-data --attack " + to_string(kind) + ")");
  return read_dataset(path);
}

Network load_pretrained(const RunConfig& config) {
  const fs::path path = Layout{config.out_dir}.pretrained();
  if (!fs::exists(path)) throw IoError("missing pretrained checkpoint " + path.string() + " (run pretrain)");
  Network model = load_checkpoint(path).model;
  model.set_all_trainable(true);
  return model;
}

ReferenceRecord load_reference(const RunConfig& config) {
  return ReferenceRecord::from_json(read_json(Layout{config.out_dir}.reference(config.attack)));
}

json epochs_json(const std::vector<EpochRecord>& log) {
  json a = json::array();
  for (const auto& e : log) a.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_accuracy", e.val_accuracy}});
  return a;
}

std::vector<EpochRecord> epochs_from_json(const json& a) {
  std::vector<EpochRecord> out;
  for (const auto& e : a)
    out.push_back({e.at("epoch").get<std::size_t>(), e.at("train_loss").get<double>(), e.at("val_accuracy").get<double>()});
  return out;
}

EpochCallback progress(const RunConfig& config, const std::string& what) {
  return [&config, what](const EpochRecord& r) {
    say(config, "  %s epoch %zu  loss %.4f  val_acc %.4f", what.c_str(), r.epoch, r.train_loss, r.val_accuracy);
  };
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string save_model(const Network& model, const fs::path& path, const json& meta) {
  const auto bytes = encode_checkpoint(model, meta);
  io::write_file(path, bytes);
  return io::fnv1a_hex(bytes);
}

void finish_row(const RunConfig& config, const RunRow& row, double wall) {
  const Layout layout{config.out_dir};
  write_json(layout.row(row.attack, row.tag), row.to_json());
  write_json(layout.timing(row.attack, row.tag), {{"tag", row.tag}, {"wall_time_s", wall}});
  say(config, "%s: test_acc %.4f  test_auc %.4f  trainable %zu / %zu", row.tag.c_str(), row.test_accuracy,
      row.test_auc, row.param_count, row.total_params);
}

std::string budget_label(double f) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", f);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------- RunConfig

void RunConfig::validate() const {
  if (corpus_size < 10) throw ConfigError("corpus_size must be at least 10");
  if (budgets.empty()) throw ConfigError("budgets must not be empty");
  for (double b : budgets)
    if (!(b > 0.0 && b <= 1.0)) throw ConfigError("budgets must lie in (0, 1]");
  if (rank_set.empty()) throw ConfigError("rank_set must not be empty");
  for (std::size_t r : rank_set)
    if (r == 0) throw ConfigError("rank_set entries must be at least 1");
  if (e_warm == 0) throw ConfigError("e_warm must be at least 1");
  if (e_full == 0) throw ConfigError("e_full must be at least 1");
  if (!allow_epoch_mismatch && e_warm + e_ft != e_full)
    throw ConfigError("e_warm + e_ft must equal e_full (" + std::to_string(e_warm) + " + " + std::to_string(e_ft) +
                      " != " + std::to_string(e_full) + "); set allow_epoch_mismatch to override");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (!(eps_gain >= 0.0)) throw ConfigError("eps_gain must be non-negative");
  if (n_importance_batches == 0) throw ConfigError("n_importance_batches must be positive");
  if (!(width_scale > 0.0 && width_scale <= 4.0)) throw ConfigError("width_scale must lie in (0, 4]");
  if (workers == 0) throw ConfigError("workers must be at least 1");
}

json RunConfig::to_json() const {
  return {{"seed", seed},
          {"train_seed", train_seed},
          {"attack", to_string(attack)},
          {"corpus_size", corpus_size},
          {"budgets", budgets},
          {"rank_set", rank_set},
          {"e_warm", e_warm},
          {"e_ft", e_ft},
          {"e_full", e_full},
          {"batch_size", batch_size},
          {"lr", lr},
          {"weight_decay", weight_decay},
          {"eps_gain", eps_gain},
          {"n_importance_batches", n_importance_batches},
          {"width_scale", width_scale},
          {"out_dir", out_dir.string()},
          {"workers", workers},
          {"allow_epoch_mismatch", allow_epoch_mismatch}};
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known = {
      "seed",   "train_seed",  "attack", "corpus_size", "budgets",      "rank_set",
      "e_warm", "e_ft",        "e_full", "batch_size",  "lr",           "weight_decay",
      "eps_gain", "n_importance_batches", "width_scale", "out_dir", "workers", "allow_epoch_mismatch"};
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");

  RunConfig c;
  try {
    if (j.contains("seed")) c.train_seed = c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("train_seed")) c.train_seed = j["train_seed"].get<std::uint64_t>();
    if (j.contains("attack")) c.attack = parse_attack_kind(j["attack"].get<std::string>());
    if (j.contains("corpus_size")) c.corpus_size = j["corpus_size"].get<std::size_t>();
    if (j.contains("budgets")) c.budgets = j["budgets"].get<std::vector<double>>();
    if (j.contains("rank_set")) c.rank_set = j["rank_set"].get<std::vector<std::size_t>>();
    if (j.contains("e_warm")) c.e_warm = j["e_warm"].get<std::size_t>();
    if (j.contains("e_ft")) c.e_ft = j["e_ft"].get<std::size_t>();
    if (j.contains("e_full")) c.e_full = j["e_full"].get<std::size_t>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<std::size_t>();
    if (j.contains("lr")) c.lr = j["lr"].get<double>();
    if (j.contains("weight_decay")) c.weight_decay = j["weight_decay"].get<double>();
    if (j.contains("eps_gain")) c.eps_gain = j["eps_gain"].get<double>();
    if (j.contains("n_importance_batches")) c.n_importance_batches = j["n_importance_batches"].get<std::size_t>();
    if (j.contains("width_scale")) c.width_scale = j["width_scale"].get<double>();
    if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
    if (j.contains("workers")) c.workers = j["workers"].get<std::size_t>();
    if (j.contains("allow_epoch_mismatch")) c.allow_epoch_mismatch = j["allow_epoch_mismatch"].get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  return from_json(j);
}

TrainOptions RunConfig::train_options(std::uint64_t shuffle_seed) const {
  TrainOptions o;
  o.batch_size = batch_size;
  o.optim.lr = lr;
  o.optim.weight_decay = weight_decay;
  o.seed = shuffle_seed;
  return o;
}

// ---------------------------------------------------------------- Layout

fs::path Layout::dataset(AttackKind k) const { return root / "data" / (to_string(k) + ".cdwf"); }
fs::path Layout::manifest(AttackKind k) const { return root / "data" / (to_string(k) + ".manifest.json"); }
fs::path Layout::pretrained() const { return root / "checkpoints" / "pretrain_bias.ckpt"; }
fs::path Layout::checkpoint(AttackKind k, const std::string& tag) const {
  return root / "checkpoints" / to_string(k) / (tag + ".ckpt");
}
fs::path Layout::reference(AttackKind k) const { return root / "ref" / (to_string(k) + ".json"); }
fs::path Layout::warm_model(AttackKind k, std::uint64_t seed, std::size_t e) const {
  return root / "cache" / to_string(k) / ("warm_s" + std::to_string(seed) + "_e" + std::to_string(e) + ".ckpt");
}
fs::path Layout::warm_profile(AttackKind k, std::uint64_t seed, std::size_t e) const {
  return root / "cache" / to_string(k) / ("warm_s" + std::to_string(seed) + "_e" + std::to_string(e) + ".json");
}
fs::path Layout::plan(AttackKind k, const std::string& tag) const {
  return root / "plans" / to_string(k) / (tag + ".json");
}
fs::path Layout::row(AttackKind k, const std::string& tag) const { return rows_dir(k) / (tag + ".json"); }
fs::path Layout::rows_dir(AttackKind k) const { return root / "rows" / to_string(k); }
fs::path Layout::timing(AttackKind k, const std::string& tag) const {
  return root / "timings" / to_string(k) / (tag + ".json");
}
fs::path Layout::report_dir(AttackKind k) const { return root / "report" / to_string(k); }

// ---------------------------------------------------------------- rows

json RunRow::to_json() const {
  json j = {{"method", method},
            {"tag", tag},
            {"attack", to_string(attack)},
            {"train_seed", train_seed},
            {"f_max", f_max},
            {"forced_rank", forced_rank},
            {"chosen_k", chosen_k ? json(*chosen_k) : json(nullptr)},
            {"chosen_r", chosen_r ? json(*chosen_r) : json(nullptr)},
            {"kept", kept},
            {"val_accuracy", val_accuracy},
            {"test_accuracy", test_accuracy},
            {"test_auc", test_auc},
            {"param_count", param_count},
            {"total_params", total_params},
            {"e_warm", e_warm},
            {"e_ft", e_ft},
            {"epochs", epochs_json(epochs)},
            {"importance", importance},
            {"checkpoint_hash", checkpoint_hash}};
  return j;
}

RunRow RunRow::from_json(const json& j) {
  try {
    RunRow r;
    r.method = j.at("method").get<std::string>();
    r.tag = j.at("tag").get<std::string>();
    r.attack = parse_attack_kind(j.at("attack").get<std::string>());
    r.train_seed = j.at("train_seed").get<std::uint64_t>();
    r.f_max = j.at("f_max").get<double>();
    r.forced_rank = j.at("forced_rank").get<bool>();
    if (!j.at("chosen_k").is_null()) r.chosen_k = j["chosen_k"].get<std::size_t>();
    if (!j.at("chosen_r").is_null()) r.chosen_r = j["chosen_r"].get<std::size_t>();
    r.kept = j.at("kept").get<std::vector<std::size_t>>();
    r.val_accuracy = j.at("val_accuracy").get<double>();
    r.test_accuracy = j.at("test_accuracy").get<double>();
    r.test_auc = j.at("test_auc").get<double>();
    r.param_count = j.at("param_count").get<std::size_t>();
    r.total_params = j.at("total_params").get<std::size_t>();
    r.e_warm = j.at("e_warm").get<std::size_t>();
    r.e_ft = j.at("e_ft").get<std::size_t>();
    r.epochs = epochs_from_json(j.at("epochs"));
    r.importance = j.at("importance").get<std::vector<double>>();
    r.checkpoint_hash = j.at("checkpoint_hash").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed report row: ") + e.what());
  }
}

json ReferenceRecord::to_json() const {
  return {{"a_ref", a_ref}, {"test_accuracy", test_accuracy}, {"test_auc", test_auc}, {"epochs", epochs}, {"seed", seed}};
}

ReferenceRecord ReferenceRecord::from_json(const json& j) {
  try {
    return {j.at("a_ref").get<double>(), j.at("test_accuracy").get<double>(), j.at("test_auc").get<double>(),
            j.at("epochs").get<std::size_t>(), j.at("seed").get<std::uint64_t>()};
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed reference record: ") + e.what());
  }
}

std::string row_tag_cdwf(double f_max, bool forced_rank, std::size_t rank, std::uint64_t train_seed,
                         std::size_t e_warm) {
  std::string tag = "cdwf_f" + budget_label(f_max);
  if (forced_rank) tag += "_r" + std::to_string(rank);
  tag += "_w" + std::to_string(e_warm) + "_s" + std::to_string(train_seed);
  return tag;
}

std::string row_tag_lora(std::size_t rank, std::uint64_t train_seed) {
  return "lora_r" + std::to_string(rank) + "_s" + std::to_string(train_seed);
}

// ---------------------------------------------------------------- commands

GenDataResult cmd_gen_data(const RunConfig& config, std::optional<AttackKind> kind_opt) {
  config.validate();
  const AttackKind kind = kind_opt.value_or(config.attack);
  const Layout layout{config.out_dir};

  const auto corpus =
      generate_corpus(config.seed, config.corpus_size, DiodeParams::reference(), SimulatorOptions{}, config.workers);
  const Dataset ds = build_dataset(kind, config.seed, config.seed, corpus);
  write_dataset(ds, layout.dataset(kind));
  write_manifest(ds.manifest, layout.manifest(kind));

  GenDataResult r;
  for (const auto& rec : ds.records) {
    const auto s = static_cast<std::size_t>(rec.split);
    ++r.records[s];
    r.attacked[s] += rec.label;
  }
  for (std::size_t s = 0; s < 3; ++s) r.pairs[s] = r.records[s] / 2;
  r.hash = hash_file(layout.dataset(kind));
  say(config, "gen-data %s: %zu ids -> pairs train/val/test %zu/%zu/%zu", to_string(kind).c_str(),
      config.corpus_size, r.pairs[0], r.pairs[1], r.pairs[2]);
  for (std::size_t s = 0; s < 3; ++s)
    say(config, "  %-5s records %zu  attacked %zu  normal %zu", to_string(static_cast<Split>(s)).c_str(),
        r.records[s], r.attacked[s], r.records[s] - r.attacked[s]);
  say(config, "  wrote %s (fnv1a %s)", layout.dataset(kind).string().c_str(), r.hash.c_str());
  return r;
}

PretrainResult cmd_pretrain(const RunConfig& config) {
  config.validate();
  const Dataset ds = load_dataset(config, kPretrainTask);
  const ExampleSet train_set = select_split(ds, Split::Train);
  const ExampleSet val_set = select_split(ds, Split::Val);

  Network model(NetworkConfig::scaled(config.width_scale), config.seed);
  TrainOptions opts = config.train_options(config.seed);
  opts.phase = kPhasePretrain;
  say(config, "pretrain on %s: %zu epochs, %zu parameters", to_string(kPretrainTask).c_str(), config.e_full,
      model.total_base_parameters());

  PretrainResult r;
  r.log = train(model, train_set, val_set, config.e_full, opts, progress(config, "pretrain"));
  r.val_accuracy = r.log.back().val_accuracy;
  const json meta = {{"task", to_string(kPretrainTask)}, {"epochs", config.e_full}, {"seed", config.seed},
                     {"val_accuracy", r.val_accuracy}};
  r.hash = save_model(model, Layout{config.out_dir}.pretrained(), meta);
  say(config, "pretrained checkpoint %s (fnv1a %s)", Layout{config.out_dir}.pretrained().string().c_str(),
      r.hash.c_str());
  return r;
}

RunRow cmd_train_ref(const RunConfig& config) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const Layout layout{config.out_dir};
  const Dataset ds = load_dataset(config, config.attack);
  const ExampleSet train_set = select_split(ds, Split::Train);
  const ExampleSet val_set = select_split(ds, Split::Val);
  const ExampleSet test_set = select_split(ds, Split::Test);

  Network model = load_pretrained(config);
  model.set_all_trainable(true);
  TrainOptions opts = config.train_options(config.seed);
  opts.phase = kPhaseFull;
  say(config, "full fine-tuning on %s: %zu epochs", to_string(config.attack).c_str(), config.e_full);
  const auto log = train(model, train_set, val_set, config.e_full, opts, progress(config, "full-ft"));
  const EvalResult test = evaluate(model, test_set);

  RunRow row;
  row.method = "full-ft";
  row.tag = "full_ft_s" + std::to_string(config.seed);
  row.attack = config.attack;
  row.train_seed = config.seed;
  row.chosen_k = model.num_blocks();
  row.kept.resize(model.num_blocks());
  std::iota(row.kept.begin(), row.kept.end(), 0);
  row.val_accuracy = log.back().val_accuracy;
  row.test_accuracy = test.accuracy;
  row.test_auc = test.auc;
  const ParamCount pc = model.count_trainable_flags();
  row.param_count = pc.trainable;
  row.total_params = pc.total;
  row.e_ft = config.e_full;
  row.epochs = log;
  row.checkpoint_hash =
      save_model(model, layout.checkpoint(config.attack, row.tag), {{"method", "full-ft"}, {"seed", config.seed}});

  const ReferenceRecord ref{row.val_accuracy, test.accuracy, test.auc, config.e_full, config.seed};
  write_json(layout.reference(config.attack), ref.to_json());
  say(config, "a_ref = %.6f", ref.a_ref);
  finish_row(config, row, seconds_since(t0));
  return row;
}

namespace {

struct WarmState {
  Network model;
  double a_warm = 0.0;
  std::vector<EpochRecord> log;
  ImportanceProfile importance;
};

WarmState warm_state(const RunConfig& config, const ExampleSet& train_set, const ExampleSet& val_set) {
  const Layout layout{config.out_dir};
  const fs::path model_path = layout.warm_model(config.attack, config.train_seed, config.e_warm);
  const fs::path profile_path = layout.warm_profile(config.attack, config.train_seed, config.e_warm);
  const std::string pretrained_hash = hash_file(layout.pretrained());

  if (fs::exists(model_path) && fs::exists(profile_path)) {
    const json p = read_json(profile_path);
    if (p.value("pretrained_hash", "") == pretrained_hash && p.value("n_batches_requested", 0u) ==
                                                                 config.n_importance_batches) {
      WarmState s;
      s.model = load_checkpoint(model_path).model;
      s.a_warm = p.at("a_warm").get<double>();
      s.log = epochs_from_json(p.at("epochs"));
      s.importance = make_importance(p.at("grad_norms").get<std::vector<double>>(), p.at("n_batches").get<std::size_t>(),
                                     p.at("batch_size").get<std::size_t>());
      say(config, "reusing warm start %s", model_path.string().c_str());
      return s;
    }
  }

  WarmState s;
  s.model = load_pretrained(config);
  say(config, "warm start: %zu epochs (train_seed %llu)", config.e_warm,
      static_cast<unsigned long long>(config.train_seed));
  const PhaseResult warm = warm_start(s.model, train_set, val_set, config.e_warm,
                                      config.train_options(config.train_seed), progress(config, "warm"));
  s.a_warm = warm.val_accuracy;
  s.log = warm.log;
  s.importance = compute_importance(s.model, val_set, config.n_importance_batches, config.batch_size);
  save_model(s.model, model_path, {{"phase", "warm"}, {"train_seed", config.train_seed}, {"e_warm", config.e_warm}});
  write_json(profile_path, {{"pretrained_hash", pretrained_hash},
                            {"a_warm", s.a_warm},
                            {"epochs", epochs_json(s.log)},
                            {"grad_norms", s.importance.grad_norms},
                            {"n_batches", s.importance.n_batches},
                            {"n_batches_requested", config.n_importance_batches},
                            {"batch_size", s.importance.batch_size}});
  return s;
}

}  // namespace

CdwfRunResult cmd_run_cdwf(const RunConfig& config, double f_max, std::optional<std::size_t> forced_rank) {
  config.validate();
  if (!(f_max > 0.0 && f_max <= 1.0)) throw ConfigError("budget must lie in (0, 1]");
  if (forced_rank && *forced_rank == 0) throw ConfigError("forced rank must be at least 1");
  const auto t0 = std::chrono::steady_clock::now();
  const Layout layout{config.out_dir};
  const Dataset ds = load_dataset(config, config.attack);
  const ExampleSet train_set = select_split(ds, Split::Train);
  const ExampleSet val_set = select_split(ds, Split::Val);
  const ExampleSet test_set = select_split(ds, Split::Test);
  const ReferenceRecord ref = load_reference(config);
  if (!fs::exists(layout.pretrained())) throw IoError("missing pretrained checkpoint (run pretrain)");

  WarmState warm = warm_state(config, train_set, val_set);
  const CalibrationRecord calibration = CalibrationRecord::from_accuracies(warm.a_warm, ref.a_ref);

  PlanOptions plan_options;
  plan_options.policy = {f_max, config.eps_gain};
  plan_options.rank_set = forced_rank ? std::vector<std::size_t>{*forced_rank} : config.rank_set;
  plan_options.seed = config.train_seed;
  CdwfPlan plan = make_plan(warm.model, warm.importance, calibration, plan_options);

  const std::string tag =
      row_tag_cdwf(f_max, forced_rank.has_value(), forced_rank.value_or(0), config.train_seed, config.e_warm);
  write_json(layout.plan(config.attack, tag), plan.to_json());
  say(config, "plan %s: k=%zu r=%zu  trainable %.4f  predicted %.4f  (a_warm %.4f, a_ref %.4f)", tag.c_str(),
      plan.config.k(), plan.config.rank, plan.trainable_fraction, plan.predicted_accuracy, calibration.a_warm,
      calibration.a_ref);

  Network& model = warm.model;
  apply_config(model, plan.config, config.train_seed);
  const PhaseResult ft =
      finetune(model, train_set, val_set, config.e_ft, config.train_options(config.train_seed), progress(config, "ft"));
  const EvalResult test = evaluate(model, test_set);

  RunRow row;
  row.method = "cdwf";
  row.tag = tag;
  row.attack = config.attack;
  row.train_seed = config.train_seed;
  row.f_max = f_max;
  row.forced_rank = forced_rank.has_value();
  row.chosen_k = plan.config.k();
  row.chosen_r = plan.config.rank;
  row.kept = plan.config.kept;
  row.val_accuracy = ft.log.empty() ? warm.a_warm : ft.val_accuracy;
  row.test_accuracy = test.accuracy;
  row.test_auc = test.auc;
  const ParamCount pc = model.count_trainable_flags();
  if (static_cast<double>(pc.trainable) / static_cast<double>(pc.total) > f_max)
    throw NumericError("applied configuration exceeds the budget");
  row.param_count = pc.trainable;
  row.total_params = pc.total;
  row.e_warm = config.e_warm;
  row.e_ft = config.e_ft;
  row.epochs = warm.log;
  for (EpochRecord e : ft.log) {
    e.epoch += config.e_warm;
    row.epochs.push_back(e);
  }
  row.importance = plan.importance.importance;
  row.checkpoint_hash =
      save_model(model, layout.checkpoint(config.attack, tag), {{"method", "cdwf"}, {"plan", plan.to_json()}});
  finish_row(config, row, seconds_since(t0));
  return {row, plan};
}

double uniform_lora_fraction(const RunConfig& config, std::size_t rank) {
  const Network probe(NetworkConfig::scaled(config.width_scale), 0);
  std::vector<std::size_t> all(probe.num_blocks());
  std::iota(all.begin(), all.end(), 0);
  const ParamCount pc = count_params(probe, {}, all, rank);
  return static_cast<double>(pc.trainable) / static_cast<double>(pc.total);
}

RunRow cmd_run_lora(const RunConfig& config, std::size_t rank) {
  config.validate();
  if (rank == 0) throw ConfigError("LoRA rank must be at least 1");
  const auto t0 = std::chrono::steady_clock::now();
  const Layout layout{config.out_dir};
  const Dataset ds = load_dataset(config, config.attack);
  const ExampleSet train_set = select_split(ds, Split::Train);
  const ExampleSet val_set = select_split(ds, Split::Val);
  const ExampleSet test_set = select_split(ds, Split::Test);

  Network model = load_pretrained(config);
  build_uniform_lora(model, rank, config.train_seed);
  TrainOptions opts = config.train_options(config.train_seed);
  opts.phase = kPhaseLora;
  say(config, "uniform LoRA r=%zu on %s: %zu epochs", rank, to_string(config.attack).c_str(), config.e_full);
  const auto log = train(model, train_set, val_set, config.e_full, opts, progress(config, "lora"));
  const EvalResult test = evaluate(model, test_set);

  RunRow row;
  row.method = "lora";
  row.tag = row_tag_lora(rank, config.train_seed);
  row.attack = config.attack;
  row.train_seed = config.train_seed;
  row.chosen_k = 0;
  row.chosen_r = rank;
  row.val_accuracy = log.back().val_accuracy;
  row.test_accuracy = test.accuracy;
  row.test_auc = test.auc;
  const ParamCount pc = model.count_trainable_flags();
  row.param_count = pc.trainable;
  row.total_params = pc.total;
  row.e_ft = config.e_full;
  row.epochs = log;
  row.checkpoint_hash =
      save_model(model, layout.checkpoint(config.attack, row.tag), {{"method", "lora"}, {"rank", rank}});
  finish_row(config, row, seconds_since(t0));
  return row;
}

EvalResult cmd_eval(const RunConfig& config, const fs::path& checkpoint) {
  if (!fs::exists(checkpoint)) throw IoError("missing checkpoint " + checkpoint.string());
  Network model = load_checkpoint(checkpoint).model;
  const Dataset ds = load_dataset(config, config.attack);
  const EvalResult r = evaluate(model, select_split(ds, Split::Test));
  say(config, "%s on %s test: accuracy %.4f  auc %.4f  (n=%zu, score=%s)", checkpoint.string().c_str(),
      to_string(config.attack).c_str(), r.accuracy, r.auc, r.n_examples, r.score_definition.c_str());
  return r;
}

// ---------------------------------------------------------------- report

RunReport build_report(std::vector<RunRow> rows) {
  const auto ref_it = std::find_if(rows.begin(), rows.end(), [](const RunRow& r) { return r.method == "full-ft"; });
  if (ref_it == rows.end()) throw ConfigError("report needs a full-FT reference row (run train-ref)");
  const RunRow ref = *ref_it;

  const auto method_rank = [](const std::string& m) { return m == "full-ft" ? 0 : m == "lora" ? 1 : 2; };
  std::sort(rows.begin(), rows.end(), [&](const RunRow& a, const RunRow& b) {
    return std::tuple(method_rank(a.method), a.forced_rank, a.f_max, a.chosen_r.value_or(0), a.e_warm,
                      a.train_seed, a.tag) < std::tuple(method_rank(b.method), b.forced_rank, b.f_max,
                                                          b.chosen_r.value_or(0), b.e_warm, b.train_seed, b.tag);
  });

  RunReport report;
  for (RunRow& row : rows) {
    ReportLine line;
    line.retention = retention(row.test_auc, ref.test_auc);
    line.param_reduction =
        param_reduction(static_cast<double>(ref.param_count), static_cast<double>(row.param_count));
    line.trainable_pct = 100.0 * static_cast<double>(row.param_count) / static_cast<double>(row.total_params);
    line.row = std::move(row);
    report.lines.push_back(std::move(line));
  }
  return report;
}

std::string format_report_text(const RunReport& report) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-28s %-8s %6s %6s %8s %8s %9s %10s %9s %8s\n", "run", "method", "k", "r",
                "test_acc", "test_auc", "retention", "params", "reduction", "train%");
  out << buf;
  for (const auto& l : report.lines) {
    const RunRow& r = l.row;
    const std::string k = r.chosen_k ? std::to_string(*r.chosen_k) : "-";
    const std::string rank = r.chosen_r ? std::to_string(*r.chosen_r) : "-";
    std::snprintf(buf, sizeof(buf), "%-28s %-8s %6s %6s %8s %8s %9s %10zu %8sx %8s\n", r.tag.c_str(),
                  r.method.c_str(), k.c_str(), rank.c_str(), fixed(100.0 * r.test_accuracy, 2).c_str(),
                  fixed(100.0 * r.test_auc, 2).c_str(), fixed(l.retention, 2).c_str(), r.param_count,
                  fixed(l.param_reduction, 1).c_str(), fixed(l.trainable_pct, 2).c_str());
    out << buf;
  }
  return out.str();
}

RunReport cmd_report(const RunConfig& config) {
  const Layout layout{config.out_dir};
  const fs::path dir = layout.rows_dir(config.attack);
  if (!fs::exists(dir)) throw IoError("no report rows under " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  std::vector<RunRow> rows;
  for (const auto& f : files) rows.push_back(RunRow::from_json(read_json(f)));
  RunReport report = build_report(std::move(rows));

  report.config = config.to_json();
  report.config.erase("out_dir");
  report.config.erase("workers");
  json artifacts = json::object();
  for (AttackKind k : {kPretrainTask, config.attack})
    if (fs::exists(layout.dataset(k))) artifacts["dataset_" + to_string(k)] = hash_file(layout.dataset(k));
  if (fs::exists(layout.pretrained())) artifacts["pretrained"] = hash_file(layout.pretrained());
  for (const auto& l : report.lines) artifacts["checkpoint_" + l.row.tag] = l.row.checkpoint_hash;
  report.artifacts = artifacts;

  json lines = json::array();
  for (const auto& l : report.lines) {
    json j = l.row.to_json();
    j.erase("epochs");
    j["retention"] = l.retention;
    j["param_reduction"] = l.param_reduction;
    j["trainable_pct"] = l.trainable_pct;
    lines.push_back(j);
  }
  const fs::path out = layout.report_dir(config.attack);
  write_json(out / "report.json", {{"rows", lines},
                                   {"config", report.config},
                                   {"artifacts", artifacts},
                                   {"retention_metric", "test_auc"},
                                   {"score_definition", EvalResult{}.score_definition}});
  io::write_text(out / "report.txt", format_report_text(report));

  std::ostringstream epochs;
  epochs << "run,epoch,phase,train_loss,val_accuracy\n";
  for (const auto& l : report.lines)
    for (const auto& e : l.row.epochs) {
      const char* phase = l.row.method == "cdwf" ? (e.epoch <= l.row.e_warm ? "warm" : "ft") : "train";
      epochs << l.row.tag << ',' << e.epoch << ',' << phase << ',' << json(e.train_loss).dump() << ','
             << json(e.val_accuracy).dump() << '\n';
    }
  io::write_text(out / "epochs.csv", epochs.str());

  std::ostringstream imp;
  imp << "run,f_max,block,importance,kept\n";
  for (const auto& l : report.lines) {
    if (l.row.method != "cdwf") continue;
    for (std::size_t b = 0; b < l.row.importance.size(); ++b) {
      const bool kept = std::find(l.row.kept.begin(), l.row.kept.end(), b) != l.row.kept.end();
      imp << l.row.tag << ',' << json(l.row.f_max).dump() << ',' << b << ',' << json(l.row.importance[b]).dump()
          << ',' << (kept ? 1 : 0) << '\n';
    }
  }
  io::write_text(out / "importance.csv", imp.str());

  std::ostringstream timings;
  timings << "run,wall_time_s\n";
  for (const auto& l : report.lines) {
    const fs::path t = layout.timing(config.attack, l.row.tag);
    if (fs::exists(t)) timings << l.row.tag << ',' << fixed(read_json(t).at("wall_time_s").get<double>(), 3) << '\n';
  }
  io::write_text(out / "timings.csv", timings.str());

  if (config.verbose) std::cout << format_report_text(report) << std::flush;
  say(config, "wrote %s", out.string().c_str());
  return report;
}

std::vector<SweepPoint> cmd_sweep_warm(const RunConfig& config, double f_max,
                                       const std::vector<std::size_t>& warm_epochs) {
  config.validate();
  if (warm_epochs.empty()) throw ConfigError("sweep-warm needs at least one warm-epoch value");
  std::vector<SweepPoint> points;
  std::ostringstream csv;
  csv << "e_warm,e_ft,k,r,trainable_fraction,predicted_accuracy,a_warm,test_accuracy,test_auc\n";
  for (std::size_t w : warm_epochs) {
    if (w == 0 || w >= config.e_full)
      throw ConfigError("warm epochs must lie in [1, e_full - 1], got " + std::to_string(w));
    RunConfig c = config;
    c.e_warm = w;
    c.e_ft = config.e_full - w;
    SweepPoint p{w, c.e_ft, cmd_run_cdwf(c, f_max)};
    const auto& pl = p.result.plan;
    const auto& row = p.result.row;
    csv << w << ',' << c.e_ft << ',' << pl.config.k() << ',' << pl.config.rank << ','
        << json(pl.trainable_fraction).dump() << ',' << json(pl.predicted_accuracy).dump() << ','
        << json(pl.calibration.a_warm).dump() << ',' << json(row.test_accuracy).dump() << ','
        << json(row.test_auc).dump() << '\n';
    points.push_back(std::move(p));
  }
  const fs::path out = Layout{config.out_dir}.report_dir(config.attack) / ("sweep_warm_f" + budget_label(f_max) + ".csv");
  io::write_text(out, csv.str());
  say(config, "wrote %s", out.string().c_str());
  return points;
}

}  // namespace cdwf
