// Copyright 2026 The miro Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "miro/experiments.hpp"
#include "miro/stats.hpp"

namespace miro {
namespace {

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

TEST(Config, ParsesKeysAndComments) {
  ExperimentConfig cfg;
  apply_config_text(cfg,
                    "# sweep\n"
                    "model = zipf:1.2:1000\n"
                    "policy = top_k:*\n"
                    "grid = 1, 10 ,100\n"
                    "\n"
                    "tokens = 50\nruns=3\nseed = 9\nsurprise = sampled\nthreads = 2\nwindow = 5\n");
  EXPECT_EQ(cfg.model, "zipf:1.2:1000");
  EXPECT_EQ(cfg.grid, (std::vector<std::string>{"1", "10", "100"}));
  EXPECT_EQ(cfg.tokens, 50U);
  EXPECT_EQ(cfg.runs, 3U);
  EXPECT_EQ(cfg.seed, 9U);
  EXPECT_EQ(cfg.surprise, SurpriseKind::kSampled);
  EXPECT_EQ(cfg.threads, 2U);
  EXPECT_EQ(cfg.window, 5U);
}

TEST(Config, Errors) {
  ExperimentConfig cfg;
  EXPECT_THROW(apply_config_text(cfg, "tokens\n"), ConfigError);
  EXPECT_THROW(apply_config_text(cfg, "colour = red\n"), ConfigError);
  EXPECT_THROW(apply_config_text(cfg, "runs = -1\n"), ConfigError);
  EXPECT_THROW(apply_config_text(cfg, "surprise = both\n"), ConfigError);
  EXPECT_THROW(parse_grid("1,,2"), ConfigError);
  EXPECT_EQ(parse_grid("top_k:5,temp:2;top_p:0.5").size(), 2U);
  cfg = ExperimentConfig{};
  cfg.runs = 0;
  EXPECT_THROW(validate_config(cfg), ConfigError);
}

TEST(LoadModel, Kinds) {
  auto z = load_model("zipf:1.2:300");
  EXPECT_EQ(z.model->n_vocab(), 300U);
  EXPECT_FALSE(z.vocab);
  auto zd = load_model("zipf");
  EXPECT_EQ(zd.model->name(), "zipf(s=1.1,N=50000)");
  auto n = load_model(std::string("ngram:") + MIRO_CORPUS + ":3");
  EXPECT_NE(n.model->name().find("order=3"), std::string::npos);
  ASSERT_TRUE(n.vocab);
  EXPECT_GE(n.vocab->size(), 1000U);
  EXPECT_EQ(prompt_tokens(n, "call me").size(), 2U);
  EXPECT_THROW(prompt_tokens(z, "call me"), ConfigError);
}

TEST(LoadModel, Errors) {
  EXPECT_THROW(load_model("gpt9"), ConfigError);
  EXPECT_THROW(load_model("zipf:x"), ConfigError);
  EXPECT_THROW(load_model("zipf:1.1:10:3"), ConfigError);
  EXPECT_THROW(load_model("ngram:"), ConfigError);
  EXPECT_THROW(load_model("ngram:/nonexistent/corpus.txt"), ModelIoError);
  EXPECT_THROW(load_model("replay:/nonexistent/file.bin"), ModelIoError);
  EXPECT_THROW(load_model("stdio:"), ConfigError);
}

TEST(Policy, InstantiateTemplate) {
  EXPECT_EQ(instantiate_policy("top_k:*", "10"), "top_k:10");
  EXPECT_EQ(instantiate_policy("*", "miro:3"), "miro:3");
  EXPECT_EQ(instantiate_policy("sample", ""), "sample");
  EXPECT_THROW(instantiate_policy("top_k:*", ""), ConfigError);
  EXPECT_THROW(instantiate_policy("sample", "3"), ConfigError);
  EXPECT_THROW(instantiate_policy("*:*", "3"), ConfigError);
}

TEST(Sweep, CsvSchemaAndDeterminism) {
  ExperimentConfig cfg;
  cfg.model = "zipf:1.1:5000";
  cfg.policy = "top_k:*";
  cfg.grid = {"1", "10"};
  cfg.tokens = 40;
  cfg.runs = 2;
  auto m = load_model(cfg.model);
  const std::string a = run_sweep(cfg, m);
  cfg.threads = 1;
  const std::string b = run_sweep(cfg, m);
  EXPECT_EQ(a, b);
  const auto l = lines(a);
  ASSERT_EQ(l.size(), 5U + 1U + 4U);
  EXPECT_EQ(l[0], "# toolkit " + std::string(kVersion) + " sweep");
  EXPECT_EQ(l[5], "param,run,surprise_rate_bits,perplexity");
  EXPECT_EQ(l[6].substr(0, 4), "1,0,");
  EXPECT_EQ(l[9].substr(0, 5), "10,1,");
  cfg.seed = 2;
  EXPECT_NE(run_sweep(cfg, m), a);
}

TEST(Sweep, GridAndPolicyMustAgree) {
  ExperimentConfig cfg;
  cfg.model = "zipf:1.1:100";
  auto m = load_model(cfg.model);
  cfg.policy = "top_k:*";
  EXPECT_THROW(run_sweep(cfg, m), ConfigError);
  cfg.policy = "top_k:3";
  cfg.grid = {"1"};
  EXPECT_THROW(run_sweep(cfg, m), ConfigError);
}

TEST(Cells, SeedsFollowParamAndRun) {
  ExperimentConfig cfg;
  cfg.model = "zipf:1.1:1000";
  cfg.policy = "*";
  cfg.grid = {"sample", "top_k:3"};
  cfg.tokens = 20;
  cfg.runs = 2;
  auto m = load_model(cfg.model);
  const auto cells = run_cells(cfg, m);
  ASSERT_EQ(cells.size(), 4U);
  const auto direct = generate(*m.model, parse_policy("top_k:3"), 20, derive_seed(1, 1, 1));
  EXPECT_EQ(cells[3].record.tokens, direct.tokens);
  EXPECT_EQ(cells[3].policy, "top_k:3");
}

TEST(Repetition, CsvRows) {
  ExperimentConfig cfg;
  cfg.model = "zipf:1.1:1000";
  cfg.policy = "top_k:*";
  cfg.grid = {"1"};
  cfg.tokens = 10;
  cfg.runs = 1;
  auto m = load_model(cfg.model);
  const auto l = lines(run_repetition(cfg, m));
  ASSERT_EQ(l.size(), 5U + 1U + 4U);
  EXPECT_EQ(l[5], "param,run,surprise_rate_bits,n,percent_repetition");
  EXPECT_EQ(l[6], "1,0,2.478409,1,90.000000");
  EXPECT_EQ(l[9], "1,0,2.478409,6,80.000000");
}

TEST(Trap, TraceAveragesRuns) {
  ExperimentConfig cfg;
  cfg.model = "zipf:1.1:1000";
  cfg.policy = "top_k:1";
  cfg.tokens = 12;
  cfg.runs = 3;
  cfg.window = 4;
  auto m = load_model(cfg.model);
  const auto l = lines(run_trap_trace(cfg, m));
  EXPECT_EQ(l[3], "# tokens=12 runs=3 seed=1 surprise=model");
  EXPECT_EQ(l[4], "# window=4");
  EXPECT_EQ(l[5], "step,mean_window_surprise_bits");
  ASSERT_EQ(l.size(), 6U + 12U);
  EXPECT_EQ(l[6], "1,2.478409");
  EXPECT_EQ(l.back(), "12,2.478409");
  cfg.grid = {"1"};
  EXPECT_THROW(run_trap_trace(cfg, m), ConfigError);
}

TEST(Trap, MirostatHoldsTargetOnBothSources) {
  for (const std::string& spec : {std::string("zipf"), std::string("ngram:") + MIRO_CORPUS}) {
    ExperimentConfig cfg;
    cfg.model = spec;
    cfg.policy = "miro:3";
    cfg.tokens = 900;
    cfg.runs = 10;
    cfg.surprise = SurpriseKind::kSampled;
    auto m = load_model(spec);
    const auto trace = trap_trace(cfg, run_cells(cfg, m));
    ASSERT_EQ(trace.size(), 900U);
    for (std::size_t i = 50; i < trace.size(); ++i) ASSERT_NEAR(trace[i], 3.0, 0.3) << spec << " step " << i;
  }
}

TEST(Trap, GreedyNGramLocksIntoFlatLoop) {
  ExperimentConfig cfg;
  cfg.model = std::string("ngram:") + MIRO_CORPUS;
  cfg.policy = "top_k:1";
  cfg.tokens = 900;
  cfg.runs = 10;
  auto m = load_model(cfg.model);
  const auto cells = run_cells(cfg, m);
  EXPECT_GT(ngram_repetition(cells[0].record.generated_tokens(), 6).percent, 95.0);
  const auto trace = trap_trace(cfg, cells);
  std::vector<double> steps;
  for (std::size_t i = 0; i < trace.size(); ++i) steps.push_back(static_cast<double>(i + 1));
  EXPECT_LE(std::abs(linear_fit(steps, trace).slope), 1e-4);
  EXPECT_LE(*std::max_element(trace.begin() + 100, trace.end()),
            *std::max_element(trace.begin(), trace.begin() + 100));
}

TEST(Repetition, PenaltySweepEmitsRows) {
  ExperimentConfig cfg;
  cfg.model = std::string("ngram:") + MIRO_CORPUS;
  cfg.policy = "penalty:*,top_k:40";
  cfg.grid = {"1", "5", "20"};
  cfg.tokens = 200;
  cfg.runs = 2;
  auto m = load_model(cfg.model);
  const auto cells = run_cells(cfg, m);
  const auto l = lines(repetition_csv(cfg, m.model->name(), cells));
  EXPECT_EQ(l.size(), 6U + 3U * 2U * 4U);
  EXPECT_EQ(l[6].substr(0, 4), "1,0,");
  double low = 0.0, high = 0.0;
  for (const auto& c : cells) {
    const double r = ngram_repetition(c.record.generated_tokens(), 1).percent;
    if (c.param == "1") low += r;
    if (c.param == "20") high += r;
  }
  EXPECT_LT(high, low);
}

TEST(Theory, CsvMatchesLibrary) {
  TheoryConfig tc;
  const auto l = lines(run_theory(tc));
  EXPECT_EQ(l[2], "family,x,exact_bits,approx_bits");
  EXPECT_EQ(l[3], "k,1,2.847036,");
  EXPECT_EQ(l[4], "k,2,3.196959,3.217610");
  EXPECT_EQ(l.back(), "p,0.9,8.310725,11.312807");
  EXPECT_EQ(l.size(), 3U + tc.k_grid.size() + tc.p_grid.size());
}

}  // namespace
}  // namespace miro
