// Copyright (c) 2026, The CDWF Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Usage: acceptance <scratch-dir>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cdwf/cdwf.hpp"
#include "cdwf/error.hpp"
#include "cdwf/metrics.hpp"
#include "cdwf/pipeline.hpp"
#include "oracles.hpp"

using namespace cdwf;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<std::size_t> iota_n(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

std::vector<std::vector<double>> snapshot(const Network& net) {
  std::vector<std::vector<double>> out;
  for (const Parameter* p : net.parameters()) out.emplace_back(p->value.values().begin(), p->value.values().end());
  return out;
}

Outcome eta_table() {
  const bool ok = eta(1) == 0.125 && eta(2) == 0.25 && eta(4) == 0.5 && eta(8) == 0.5 && eta(16) == 0.5;
  return {ok, fmt("eta(1,2,4,8,16) = %g %g %g %g %g", eta(1), eta(2), eta(4), eta(8), eta(16))};
}

Outcome importance(const ExampleSet& val) {
  Network net(NetworkConfig::scaled(0.5), 42);
  const auto before = snapshot(net);
  std::vector<std::vector<double>> stats;
  for (BatchNorm1d* bn : net.batch_norms()) {
    stats.push_back(bn->running_mean);
    stats.push_back(bn->running_var);
  }
  const ImportanceProfile p = compute_importance(net, val, 50);
  double sum = 0.0, min = 1.0;
  for (double v : p.importance) {
    sum += v;
    min = std::min(min, v);
  }
  bool unchanged = snapshot(net) == before;
  std::size_t j = 0;
  for (BatchNorm1d* bn : net.batch_norms()) {
    unchanged = unchanged && bn->running_mean == stats[j] && bn->running_var == stats[j + 1];
    j += 2;
  }
  const bool ok = std::abs(sum - 1.0) <= 1e-12 && min >= 0.0 && unchanged;
  return {ok, fmt("|sum-1| = %.2e, min I = %.4f, parameters unchanged = %s", std::abs(sum - 1.0), min,
                  unchanged ? "yes" : "no")};
}

Outcome selection_oracle() {
  Substream rng(42, 3, StreamTag::Init);
  std::size_t agree = 0, infeasible = 0;
  std::string first_miss;
  for (int trial = 0; trial < 1000; ++trial) {
    const oracle::SelectionInstance in = oracle::random_instance(rng);
    const auto cands = enumerate_candidates(in.importance, in.rank_set);
    double smallest = 0.0;
    const auto want = oracle::brute_force_select(in, &smallest);
    bool match = false;
    try {
      const ScoredCandidate got = select(cands, in.costs, in.importance, in.calibration, in.policy);
      match = want && got.config.kept == want->kept && got.config.rank == want->rank &&
              got.trainable_fraction == want->fraction && got.predicted_accuracy == want->predicted;
    } catch (const InfeasibleBudget& e) {
      match = !want && e.smallest_feasible_fraction() == smallest;
      ++infeasible;
    }
    if (match) ++agree;
    else if (first_miss.empty()) first_miss = fmt(" (first mismatch: trial %d)", trial);
  }
  return {agree == 1000, fmt("%zu/1000 agree, %zu infeasible%s", agree, infeasible, first_miss.c_str())};
}

Outcome gradient_check() {
  NetworkConfig toy;
  toy.input_length = 24;
  toy.stem_channels = 8;
  toy.stem_kernel = 5;
  toy.stem_stride = 2;
  toy.block_channels = {8, 8};
  Network net(toy, 5);
  Substream rng(5, 0, StreamTag::Init);
  for (BatchNorm1d* bn : net.batch_norms()) {
    for (double& v : bn->gamma.value.values()) v = rng.uniform(0.5, 1.5);
    for (double& v : bn->beta.value.values()) v = rng.uniform(-0.3, 0.3);
  }
  Tensor x({4, 1, 24});
  for (double& v : x.values()) v = rng.normal();
  const auto r = oracle::gradcheck(net, x, {0, 1, 0, 1}, Mode::Train);
  return {r.max_rel_error < 1e-5 && r.checked > 0,
          fmt("%zu elements, max relative error %.2e at %s", r.checked, r.max_rel_error, r.worst.c_str())};
}

Outcome lora_contracts(const ExampleSet& train_set, const ExampleSet& val) {
  Network net(NetworkConfig::scaled(0.5), 42);
  const Tensor x = make_batch(val, iota_n(8));
  const Tensor before = net.forward(x, Mode::Eval);
  const std::vector<std::size_t> frozen{0, 1, 2, 3, 4, 5};
  apply_config(net, {{6, 7}, frozen, 4}, 42);
  const Tensor after = net.forward(x, Mode::Eval);
  double identity = 0.0;
  for (std::size_t i = 0; i < before.size(); ++i) identity = std::max(identity, std::abs(before[i] - after[i]));

  bool counts = true;
  for (std::size_t r : {1, 2, 4, 8, 16}) {
    Network probe(NetworkConfig::scaled(0.5), 1);
    const std::vector<std::size_t> all = iota_n(probe.num_blocks());
    probe.attach_lora(all, r, 1);
    for (std::size_t b : all) {
      const Conv1d& conv = probe.block(b).conv2;
      const std::size_t c_out = conv.weight.value.shape()[0];
      const std::size_t c_in = conv.weight.value.shape()[1];
      const std::size_t k = conv.weight.value.shape()[2];
      const std::size_t enumerated = conv.lora()->a.size() + conv.lora()->b.size();
      counts = counts && enumerated == r * (c_out + c_in * k);
    }
  }

  std::vector<std::vector<double>> frozen_before;
  for (std::size_t b : frozen)
    for (const Parameter* p : net.block_parameters(b)) frozen_before.emplace_back(p->value.values().begin(), p->value.values().end());
  TrainOptions opts;
  finetune(net, train_set, val, 1, opts);
  bool bit_identical = true;
  std::size_t j = 0;
  for (std::size_t b : frozen) {
    for (const Parameter* p : net.block_parameters(b)) {
      bit_identical = bit_identical && std::equal(frozen_before[j].begin(), frozen_before[j].end(), p->value.values().begin());
      ++j;
    }
  }

  return {identity <= 1e-12 && counts && bit_identical,
          fmt("attach identity %.2e, adapter counts %s, frozen base after 1 epoch %s", identity,
              counts ? "match" : "differ", bit_identical ? "bit-identical" : "changed")};
}

Outcome dataset_properties() {
  const auto corpus = generate_corpus(42, 1200, DiodeParams::reference());
  std::vector<std::string> failures;
  const auto check = [&](bool ok, const std::string& what) {
    if (!ok && std::find(failures.begin(), failures.end(), what) == failures.end()) failures.push_back(what);
  };
  const AttackRanges ranges;
  for (AttackKind kind : {AttackKind::Bias, AttackKind::Drift, AttackKind::Spike}) {
    const std::string k = to_string(kind);
    const Dataset ds = build_dataset(kind, 42, 42, corpus);

    std::map<std::uint32_t, std::pair<const ExampleRecord*, const ExampleRecord*>> pairs;
    for (const ExampleRecord& r : ds.records) (r.label ? pairs[r.id].second : pairs[r.id].first) = &r;
    std::array<std::size_t, 3> ids{};
    for (const NormalSnippet& n : corpus) {
      const auto [normal, attacked] = make_pair(n, kind, 42);
      const AttackSpec& s = attacked.spec;
      const AttackWindow& w = s.window;
      check(w.start_idx >= kGuardSamples && w.end_idx + kGuardSamples <= kSnippetLength, k + " window inside guards");
      for (std::size_t i = 0; i < kSnippetLength; ++i)
        if (!w.contains(i)) check(attacked.samples[i] == n.samples[i], k + " outside-window samples preserved");
      switch (kind) {
        case AttackKind::Bias:
          check(std::abs(s.bias_factor) >= ranges.bias_min && std::abs(s.bias_factor) <= ranges.bias_max,
                "bias factor range");
          break;
        case AttackKind::Drift:
          check(s.drift_magnitude >= ranges.drift_min && s.drift_magnitude <= ranges.drift_max, "drift range");
          break;
        case AttackKind::Spike:
          check(s.spike_events.size() >= 3 && s.spike_events.size() <= 10, "spike count");
          for (const SpikeEvent& e : s.spike_events) {
            check(e.width >= 1 && e.width <= 4, "spike width");
            check(std::abs(e.magnitude) >= 0.01 && std::abs(e.magnitude) <= 0.20, "spike magnitude");
            check(e.index >= w.start_idx && e.index + e.width <= w.end_idx, "spike inside window");
          }
          break;
      }

      const auto it = pairs.find(n.id);
      check(it != pairs.end() && it->second.first && it->second.second, k + " both records present");
      if (it == pairs.end() || !it->second.first || !it->second.second) continue;
      const ExampleRecord& a = *it->second.first;
      const ExampleRecord& b = *it->second.second;
      check(a.split == b.split, k + " pair shares a split");
      for (std::size_t i = 0; i < kSnippetLength; ++i)
        if (!w.contains(i)) check(a.samples[i] == b.samples[i], k + " stored outside-window samples preserved");
      const auto sp = static_cast<std::size_t>(a.split);
      ++ids[sp];
    }
    std::array<std::size_t, 3> labels1{}, labels0{};
    for (const ExampleRecord& r : ds.records) (r.label ? labels1 : labels0)[static_cast<std::size_t>(r.split)]++;
    check(labels0 == labels1, k + " 50/50 labels per split");
    check(ids == (std::array<std::size_t, 3>{840, 180, 180}), k + " split sizes 840/180/180");
    check(ds.records.size() == 2400, k + " record count");

    std::set<std::uint32_t> seen[3];
    for (const ExampleRecord& r : ds.records) seen[static_cast<std::size_t>(r.split)].insert(r.id);
    std::size_t overlap = 0;
    for (int s = 0; s < 3; ++s)
      for (int t = s + 1; t < 3; ++t)
        for (std::uint32_t id : seen[s]) overlap += seen[t].count(id);
    check(overlap == 0, k + " no split leakage");

    check(encode_dataset(build_dataset(kind, 42, 42, 1200)) == encode_dataset(ds), k + " byte-identical regeneration");
  }
  std::string detail = "3 kinds x 1,200 ids: guards, outside-window, ranges, balance, leakage, 840/180/180, regeneration";
  if (!failures.empty()) {
    detail = "violations:";
    for (const std::string& f : failures) detail += " [" + f + "]";
  }
  return {failures.empty(), detail};
}

struct EndToEnd {
  Outcome outcome;
  std::vector<CdwfPlan> budget_plans;  // train seed 42, budgets ascending
  std::string budget_error;
};

EndToEnd end_to_end(const fs::path& out) {
  EndToEnd e;
  RunConfig base;
  base.out_dir = out;
  base.verbose = true;
  base.validate();
  RunConfig bias = base;
  bias.attack = AttackKind::Bias;
  cmd_gen_data(bias);
  cmd_gen_data(base);
  cmd_pretrain(base);
  const RunRow ref = cmd_train_ref(base);

  std::vector<CdwfRunResult> budget_runs;
  try {
    for (double f : base.budgets) budget_runs.push_back(cmd_run_cdwf(base, f));
  } catch (const InfeasibleBudget& ex) {
    e.budget_error = ex.what();
  }
  for (const auto& r : budget_runs) e.budget_plans.push_back(r.plan);
  const CdwfRunResult* at5 = nullptr;
  for (const auto& r : budget_runs)
    if (r.plan.f_max == 0.05) at5 = &r;

  const double f_match = uniform_lora_fraction(base, 4) * 1.02;
  int wins = 0;
  std::string seeds;
  for (std::uint64_t seed : {42u, 43u, 44u}) {
    RunConfig c = base;
    c.train_seed = seed;
    const CdwfRunResult cd = cmd_run_cdwf(c, f_match, 4);
    const RunRow lo = cmd_run_lora(c, 4);
    const bool win = cd.row.test_auc >= lo.test_auc;
    wins += win;
    seeds += fmt(" s%llu %.4f/%.4f", static_cast<unsigned long long>(seed), cd.row.test_auc, lo.test_auc);
  }
  cmd_report(base);

  const bool ref_ok = ref.test_auc >= 0.95;
  double ret = 0.0, frac = 1.0;
  if (at5) {
    ret = retention(at5->row.test_auc, ref.test_auc);
    frac = static_cast<double>(at5->row.param_count) / static_cast<double>(at5->row.total_params);
  }
  const bool cdwf_ok = at5 && ret >= 95.0 && frac < 0.10;
  e.outcome = {ref_ok && cdwf_ok && wins >= 2,
               fmt("full-FT AUC %.4f; CDWF f=0.05 retention %.2f%% at %.2f%% params; matched CDWF/LoRA AUC%s -> %d/3",
                   ref.test_auc, ret, 100.0 * frac, seeds.c_str(), wins)};
  return e;
}

Outcome budget_safety(const EndToEnd& e, const std::vector<double>& budgets) {
  if (!e.budget_error.empty()) return {false, e.budget_error};
  if (e.budget_plans.size() != budgets.size()) return {false, "missing plans"};
  bool ok = true;
  std::string detail;
  for (std::size_t i = 0; i < e.budget_plans.size(); ++i) {
    const CdwfPlan& p = e.budget_plans[i];
    ok = ok && p.trainable_fraction <= p.f_max;
    if (i > 0) ok = ok && p.config.k() >= e.budget_plans[i - 1].config.k();
    detail += fmt("%sf=%.2f: k=%zu r=%zu frac=%.4f", i ? "; " : "", p.f_max, p.config.k(), p.config.rank,
                  p.trainable_fraction);
  }
  return {ok, detail};
}

Outcome metric_oracles() {
  Substream rng(42, 9, StreamTag::Init);
  std::vector<double> scores(200);
  std::vector<int> labels(200);
  for (std::size_t i = 0; i < 200; ++i) {
    scores[i] = std::round(rng.uniform() * 25.0) / 25.0;
    labels[i] = static_cast<int>(rng.uniform_int(0, 1));
  }
  const double auc_err = std::abs(roc_auc(scores, labels) - oracle::pairwise_auc(scores, labels));
  const double ret = retention(97.71, 98.49);
  const double red = param_reduction(3844930, 32322);
  // Published two-decimal figures: retention truncated, reduction rounded.
  const bool ok = auc_err <= 1e-12 && std::abs(ret - 99.20) < 0.01 && std::abs(red - 118.96) < 0.005;
  return {ok, fmt("AUC oracle error %.1e; retention %.4f vs 99.20; reduction %.4f vs 118.96", auc_err, ret, red)};
}

Outcome predictor_properties() {
  Substream rng(42, 10, StreamTag::Init);
  const std::vector<std::size_t> ranks{1, 2, 4, 8, 16};
  std::size_t violations = 0, checked = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t b = static_cast<std::size_t>(rng.uniform_int(1, 12));
    std::vector<double> raw(b);
    for (double& v : raw) v = rng.uniform() < 0.1 ? 0.0 : rng.uniform();
    raw[rng.uniform_int(0, static_cast<std::int64_t>(b) - 1)] += 1e-3;
    const std::vector<double> imp = make_importance(raw).importance;
    const double a_warm = rng.uniform(0.4, 1.0);
    const auto cal = CalibrationRecord::from_accuracies(a_warm, rng.uniform(a_warm, 1.0));
    const auto cands = enumerate_candidates(imp, ranks);
    std::map<std::size_t, std::vector<std::pair<std::size_t, double>>> by_rank;
    double full = 0.0;
    for (const CandidateConfig& c : cands) {
      const double a = predict_accuracy(c, imp, cal);
      ++checked;
      if (a < cal.a_warm - 1e-12 || a > cal.a_warm + cal.g_max + 1e-12) ++violations;
      if (c.rank == 0) full = a;
      else by_rank[c.rank].push_back({c.k(), a});
    }
    for (auto& [r, series] : by_rank) {
      std::sort(series.begin(), series.end());
      series.push_back({b, full});
      for (std::size_t i = 1; i < series.size(); ++i)
        if (series[i].second < series[i - 1].second - 1e-12) ++violations;
    }
  }
  return {violations == 0, fmt("%zu predictions over 10,000 profiles, %zu violations", checked, violations)};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: acceptance <scratch-dir>\n");
    return 2;
  }
  const fs::path out = argv[1];
  fs::remove_all(out);
  fs::create_directories(out);

  std::map<int, std::pair<std::string, Outcome>> results;
  const auto run = [&](int id, const std::string& name, const std::function<Outcome()>& f) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& ex) {
      o = {false, std::string("exception: ") + ex.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.detail += fmt(" (%.1f s)", s);
    std::printf("criterion %d done: %s\n", id, o.pass ? "pass" : "fail");
    std::fflush(stdout);
    results[id] = {name, o};
  };

  const Dataset small = build_dataset(AttackKind::Spike, 42, 42, 200);
  const ExampleSet small_train = select_split(small, Split::Train);
  const ExampleSet small_val = select_split(small, Split::Val);

  run(1, "eta table", eta_table);
  run(2, "importance", [&] { return importance(small_val); });
  run(3, "selection oracle", selection_oracle);
  run(5, "gradient correctness", gradient_check);
  run(6, "LoRA contracts", [&] { return lora_contracts(small_train, small_val); });
  run(7, "dataset properties", dataset_properties);
  run(9, "metric oracles", metric_oracles);
  run(10, "predictor bounds and monotonicity", predictor_properties);
  EndToEnd e2e;
  run(8, "desk-scale end to end", [&] {
    e2e = end_to_end(out);
    return e2e.outcome;
  });
  run(4, "budget safety", [&] { return budget_safety(e2e, RunConfig{}.budgets); });

  int failed = 0;
  std::printf("\n");
  for (const auto& [id, r] : results) {
    std::printf("[%s] %2d %s: %s\n", r.second.pass ? "PASS" : "FAIL", id, r.first.c_str(), r.second.detail.c_str());
    failed += !r.second.pass;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(results.size()) - failed, results.size());
  return failed == 0 ? 0 : 1;
}
