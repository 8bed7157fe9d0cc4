// Copyright (c) 2026, The CDWF Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cdwf/error.hpp"
#include "cdwf/pipeline.hpp"

namespace cdwf {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig tiny(const fs::path& out) {
  RunConfig c;
  c.corpus_size = 40;
  c.width_scale = 0.125;
  c.e_full = 2;
  c.e_warm = 1;
  c.e_ft = 1;
  c.batch_size = 16;
  c.n_importance_batches = 2;
  c.out_dir = out;
  c.verbose = false;
  return c;
}

TEST(RunConfig, JsonOverlayAndValidation) {
  const RunConfig c = RunConfig::from_json({{"seed", 7}, {"attack", "drift"}, {"budgets", {0.1}}});
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.train_seed, 7u);
  EXPECT_EQ(c.attack, AttackKind::Drift);
  EXPECT_EQ(c.budgets, std::vector<double>{0.1});
  EXPECT_EQ(c.e_full, 10u);
  EXPECT_EQ(RunConfig::from_json(c.to_json()).to_json(), c.to_json());

  EXPECT_THROW(RunConfig::from_json({{"sed", 7}}), ConfigError);
  EXPECT_THROW(RunConfig::from_json({{"e_warm", "four"}}), ConfigError);
  // from_json only overlays; command-line flags may still complete the config.
  EXPECT_THROW(RunConfig::from_json({{"e_warm", 4}}).validate(), ConfigError);
  EXPECT_NO_THROW(RunConfig::from_json({{"e_warm", 4}, {"allow_epoch_mismatch", true}}).validate());
  EXPECT_THROW(RunConfig::from_json({{"budgets", {1.5}}}).validate(), ConfigError);
  EXPECT_THROW(RunConfig::from_json({{"rank_set", {0, 4}}}).validate(), ConfigError);
}

RunRow row(const std::string& method, const std::string& tag, double auc, std::size_t params) {
  RunRow r;
  r.method = method;
  r.tag = tag;
  r.test_auc = auc;
  r.param_count = params;
  r.total_params = 1000;
  return r;
}

TEST(Report, OrderingAndDerivedColumns) {
  std::vector<RunRow> rows;
  RunRow c = row("cdwf", "c", 0.9, 50);
  c.f_max = 0.05;
  rows.push_back(c);
  rows.push_back(row("lora", "l", 0.8, 40));
  rows.push_back(row("full-ft", "f", 0.96, 1000));
  const RunReport rep = build_report(rows);
  ASSERT_EQ(rep.lines.size(), 3u);
  EXPECT_EQ(rep.lines[0].row.method, "full-ft");
  EXPECT_EQ(rep.lines[0].retention, 100.0);
  EXPECT_NEAR(rep.lines[2].retention, 100.0 * 0.9 / 0.96, 1e-12);
  EXPECT_EQ(rep.lines[2].param_reduction, 20.0);
  EXPECT_EQ(rep.lines[2].trainable_pct, 5.0);
  EXPECT_FALSE(format_report_text(rep).empty());

  EXPECT_THROW(build_report({row("lora", "l", 0.8, 40)}), ConfigError);
}

TEST(Pipeline, TinyEndToEndIsReproducible) {
  const fs::path root = fs::temp_directory_path() / "cdwf_pipeline_test";
  fs::remove_all(root);
  std::vector<std::string> reports;
  for (const char* name : {"a", "b"}) {
    const RunConfig c = tiny(root / name);
    cmd_gen_data(c, AttackKind::Bias);
    const GenDataResult g = cmd_gen_data(c);
    EXPECT_EQ(g.pairs[0] + g.pairs[1] + g.pairs[2], 40u);
    EXPECT_EQ(g.attacked[0] * 2, g.records[0]);
    cmd_pretrain(c);
    const RunRow ref = cmd_train_ref(c);
    EXPECT_EQ(ref.method, "full-ft");
    EXPECT_EQ(ref.param_count, ref.total_params);

    const CdwfRunResult r = cmd_run_cdwf(c, 0.5);
    EXPECT_LE(r.plan.trainable_fraction, 0.5);
    EXPECT_EQ(r.row.epochs.size(), 2u);
    EXPECT_EQ(static_cast<double>(r.row.param_count) / r.row.total_params, r.plan.trainable_fraction);
    const Layout layout{c.out_dir};
    EXPECT_TRUE(fs::exists(layout.warm_model(c.attack, c.train_seed, c.e_warm)));
    // Second call reuses the cached warm state and must agree.
    EXPECT_EQ(cmd_run_cdwf(c, 0.5).row.to_json(), r.row.to_json());

    const RunRow lora = cmd_run_lora(c, 2);
    EXPECT_LT(lora.param_count, ref.param_count);
    EXPECT_NEAR(static_cast<double>(lora.param_count) / lora.total_params, uniform_lora_fraction(c, 2), 1e-15);

    const EvalResult ev = cmd_eval(c, layout.checkpoint(c.attack, ref.tag));
    EXPECT_EQ(ev.auc, ref.test_auc);

    const RunReport rep = cmd_report(c);
    EXPECT_EQ(rep.lines.size(), 3u);
    EXPECT_EQ(rep.lines[0].retention, 100.0);
    reports.push_back(slurp(layout.report_dir(c.attack) / "report.json"));
  }
  EXPECT_EQ(reports[0], reports[1]);
  EXPECT_EQ(slurp(root / "a" / "data" / "spike.cdwf"), slurp(root / "b" / "data" / "spike.cdwf"));
  fs::remove_all(root);
}

TEST(Pipeline, MissingInputsAreIoErrors) {
  const RunConfig c = tiny(fs::temp_directory_path() / "cdwf_missing_inputs");
  fs::remove_all(c.out_dir);
  EXPECT_THROW(cmd_pretrain(c), IoError);
  EXPECT_THROW(cmd_run_cdwf(c, 0.05), IoError);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CDWF_CLI_PATH) + " " + args + " -q > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  const fs::path out = fs::temp_directory_path() / "cdwf_cli_test";
  fs::remove_all(out);
  const std::string base = "--out " + out.string() + " --corpus-size 40 --width-scale 0.125 --full-epochs 2";
  const std::string common = base + " --warm-epochs 1";
  EXPECT_EQ(run_cli("run-cdwf " + common), 4);
  EXPECT_EQ(run_cli("run-cdwf " + base + " --warm-epochs 0"), 3);
  EXPECT_EQ(run_cli("run-cdwf " + common + " --ft-epochs 5"), 3);
  EXPECT_EQ(run_cli("no-such-command"), 3);
  EXPECT_EQ(run_cli("gen-data " + common + " --attack bias"), 0);
  EXPECT_EQ(run_cli("gen-data " + common), 0);
  EXPECT_EQ(run_cli("pretrain " + common), 0);
  EXPECT_EQ(run_cli("train-ref " + common), 0);
  EXPECT_EQ(run_cli("run-cdwf " + common + " --budget 0.0001"), 2);
  EXPECT_EQ(run_cli("eval " + common + " --checkpoint " + (out / "nope.ckpt").string()), 4);
  fs::remove_all(out);
}

}  // namespace
}  // namespace cdwf
