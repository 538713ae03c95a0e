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

#include <cmath>
#include <vector>

#include "miro/decoding.hpp"
#include "miro/zipf_estimator.hpp"
#include "miro/zipf_theory.hpp"

namespace miro {
namespace {

TokenDistribution make(std::vector<double> probs) {
  std::vector<TokenId> ids(probs.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<TokenId>(i);
  return TokenDistribution::from_weights(std::move(ids), std::move(probs), probs.size());
}

TEST(TokenDistribution, FromWeightsSortsAndNormalizes) {
  const auto d = TokenDistribution::from_weights({4, 7, 1, 2}, {1.0, 3.0, 0.0, 1.0}, 8);
  ASSERT_EQ(d.size(), 3U);
  EXPECT_EQ(d.token_ids, (std::vector<TokenId>{7, 2, 4}));
  EXPECT_DOUBLE_EQ(d.probs[0], 0.6);
  EXPECT_DOUBLE_EQ(d.probs[1], 0.2);
  EXPECT_EQ(d.modal_token(), 7U);
  EXPECT_DOUBLE_EQ(d.prob_of(1), 0.0);
  EXPECT_NO_THROW(d.validate());
  EXPECT_THROW(TokenDistribution::from_weights({0}, {0.0}, 1), InvalidDistribution);
  EXPECT_THROW(TokenDistribution::from_weights({0}, {-1.0}, 1), InvalidDistribution);
  EXPECT_THROW(TokenDistribution::from_weights({0, 1}, {1.0}, 2), InvalidDistribution);
}

TEST(TokenDistribution, ValidateRejectsBrokenInvariants) {
  TokenDistribution d;
  d.n_vocab_full = 3;
  EXPECT_THROW(d.validate(), InvalidDistribution);
  d.token_ids = {0, 1};
  d.probs = {0.4, 0.6};
  EXPECT_THROW(d.validate(), InvalidDistribution);
  d.probs = {0.6, 0.3};
  EXPECT_THROW(d.validate(), InvalidDistribution);
  d.probs = {0.6, 0.4};
  d.token_ids = {1, 1};
  EXPECT_THROW(d.validate(), InvalidDistribution);
  d.token_ids = {1, 3};
  EXPECT_THROW(d.validate(), InvalidDistribution);
}

TEST(Softmax, MatchesClosedForm) {
  LogitVector l{{0, 1, 2}, {0.0, std::log(2.0), std::log(5.0)}, 3};
  const auto d = softmax_to_distribution(l);
  EXPECT_EQ(d.token_ids, (std::vector<TokenId>{2, 1, 0}));
  EXPECT_NEAR(d.probs[0], 0.625, 1e-15);
  EXPECT_NEAR(d.probs[2], 0.125, 1e-15);
  const auto hot = softmax_to_distribution(l, 2.0);
  const double z = 1.0 + std::sqrt(2.0) + std::sqrt(5.0);
  EXPECT_NEAR(hot.probs[0], std::sqrt(5.0) / z, 1e-15);
}

TEST(Softmax, StableForLargeScoresAndNegativeInfinity) {
  const double inf = std::numeric_limits<double>::infinity();
  LogitVector l{{0, 1, 2}, {1000.0, 1000.0, -inf}, 3};
  const auto d = softmax_to_distribution(l);
  ASSERT_EQ(d.size(), 2U);
  EXPECT_DOUBLE_EQ(d.probs[0], 0.5);
  EXPECT_THROW(softmax_to_distribution(LogitVector{{0}, {-inf}, 1}), InvalidDistribution);
  EXPECT_THROW(softmax_to_distribution(LogitVector{{0}, {NAN}, 1}), InvalidDistribution);
  EXPECT_THROW(softmax_to_distribution(l, 0.0), DomainError);
}

TEST(Softmax, RoundTripsThroughLogits) {
  const auto d = make({0.5, 0.3, 0.2});
  const auto back = softmax_to_distribution(to_logits(d));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(back.probs[i], d.probs[i], 1e-15);
}

TEST(Softmax, TemperatureOnZipfMatchesRescaledExponent) {
  const ZipfParams p(1.1, 200);
  std::vector<double> w;
  for (std::uint64_t r = 1; r <= 200; ++r) w.push_back(zipf_pmf(r, p));
  const auto hot = softmax_to_distribution(to_logits(make(w)), 0.8);
  for (std::uint64_t r : {1, 2, 50, 200})
    EXPECT_NEAR(hot.probs[r - 1], zipf_pmf(r, ZipfParams(1.1, 200, 0.8)), 1e-13) << r;
}

TEST(TopK, KeepsAndRenormalizes) {
  const auto d = top_k_filter(make({0.5, 0.3, 0.2}), 2);
  ASSERT_EQ(d.size(), 2U);
  EXPECT_NEAR(d.probs[0], 0.625, 1e-15);
  EXPECT_NEAR(d.probs[1], 0.375, 1e-15);
  EXPECT_EQ(top_k_filter(make({0.5, 0.3, 0.2}), 10).size(), 3U);
  EXPECT_EQ(top_k_filter(make({0.5, 0.3, 0.2}), 1).probs[0], 1.0);
  EXPECT_THROW(top_k_filter(make({1.0}), 0), DomainError);
}

TEST(TopP, SmallestCoveringPrefix) {
  const auto d = make({0.5, 0.3, 0.2});
  EXPECT_EQ(top_p_count(d, 0.5), 1U);
  EXPECT_EQ(top_p_count(d, 0.51), 2U);
  EXPECT_EQ(top_p_count(d, 0.8), 2U);
  EXPECT_EQ(top_p_count(d, 0.81), 3U);
  EXPECT_EQ(top_p_count(d, 1.0), 3U);
  EXPECT_EQ(top_p_count(d, 1e-9), 1U);
  EXPECT_THROW(top_p_count(d, 0.0), DomainError);
  EXPECT_THROW(top_p_count(d, 1.5), DomainError);
  const auto f = top_p_filter(d, 0.8);
  EXPECT_NEAR(f.probs[1], 0.375, 1e-15);
}

TEST(TopP, ReapplicationCanShrinkFurther) {
  const auto d = make({0.6, 0.15, 0.15, 0.1});
  const auto once = top_p_filter(d, 0.7);
  EXPECT_EQ(once.size(), 2U);
  EXPECT_EQ(top_p_filter(once, 0.7).size(), 1U);
}

TEST(TopP, FilteredSetIsStableUnderTopKOfItsSize) {
  const auto d = make({0.4, 0.2, 0.15, 0.1, 0.1, 0.05});
  for (double p : {0.3, 0.55, 0.7, 0.85, 0.99}) {
    const auto f = top_p_filter(d, p);
    const auto g = top_k_filter(f, f.size());
    EXPECT_EQ(f.token_ids, g.token_ids);
    EXPECT_EQ(f.probs, g.probs);
  }
}

TEST(Penalty, NegativeAndPositiveScores) {
  LogitVector l{{0, 1, 2}, {-2.0, 3.0, 1.0}, 3};
  const std::vector<TokenId> seen = {0, 1, 0};
  const auto sym = repetition_penalty(l, seen, 2.0);
  EXPECT_DOUBLE_EQ(sym.scores[0], -4.0);
  EXPECT_DOUBLE_EQ(sym.scores[1], 1.5);
  EXPECT_DOUBLE_EQ(sym.scores[2], 1.0);
  const auto neg = repetition_penalty(l, seen, 2.0, PenaltyMode::kNegativeOnly);
  EXPECT_DOUBLE_EQ(neg.scores[0], -4.0);
  EXPECT_DOUBLE_EQ(neg.scores[1], 3.0);
  const auto id = repetition_penalty(l, seen, 1.0);
  EXPECT_EQ(id.scores, l.scores);
  EXPECT_THROW(repetition_penalty(l, seen, 0.5), DomainError);
}

TEST(Penalty, IgnoresCounts) {
  LogitVector l{{0, 1}, {-1.0, -1.0}, 2};
  const std::vector<TokenId> once = {0};
  const std::vector<TokenId> thrice = {0, 0, 0};
  EXPECT_EQ(repetition_penalty(l, once, 3.0).scores, repetition_penalty(l, thrice, 3.0).scores);
}

TEST(Sample, FrequenciesMatchProbabilities) {
  const auto d = make({0.5, 0.3, 0.2});
  Rng rng(42);
  std::vector<int> counts(3, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[sample(d, rng).token_id];
  for (std::size_t t = 0; t < 3; ++t)
    EXPECT_NEAR(counts[t] / static_cast<double>(n), d.probs[t], 0.01) << t;
}

TEST(Sample, ReportsBothSurprises) {
  const auto full = make({0.5, 0.3, 0.2});
  const auto kept = top_k_filter(full, 1);
  Rng rng(1);
  const auto out = sample(kept, rng, &full);
  EXPECT_EQ(out.token_id, 0U);
  EXPECT_DOUBLE_EQ(out.surprise_bits, 0.0);
  EXPECT_DOUBLE_EQ(out.surprise_model_bits, 1.0);
  EXPECT_FALSE(std::signbit(surprise_bits_of(1.0)));
}

TEST(Sample, DeterministicForSeed) {
  const auto d = make({0.25, 0.25, 0.25, 0.25});
  Rng a(7), b(7);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample(d, a).token_id, sample(d, b).token_id);
}

TEST(Estimator, TwoProbabilityExample) {
  const std::vector<double> p = {0.5, 0.25};
  const auto e = estimate_zipf_exponent(p);
  EXPECT_NEAR(e.s_hat, 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(e.epsilon_hat, 1e-3);
  EXPECT_EQ(e.m_used, 2U);
}

TEST(Estimator, RecoversExactZipfAndIsScaleInvariant) {
  for (double s : {0.7, 1.0, 1.1, 1.3, 2.0}) {
    std::vector<double> p, scaled;
    for (int i = 1; i <= 300; ++i) {
      p.push_back(std::pow(i, -s));
      scaled.push_back(17.5 * p.back());
    }
    const auto e = estimate_zipf_exponent(p);
    EXPECT_NEAR(e.s_hat, s, 1e-10) << s;
    EXPECT_EQ(e.m_used, 100U);
    EXPECT_NEAR(estimate_zipf_exponent(scaled).s_hat, e.s_hat, 1e-12);
  }
}

TEST(Estimator, UsesOnlyFirstMEntries) {
  std::vector<double> p;
  for (int i = 1; i <= 10; ++i) p.push_back(std::pow(i, -1.2));
  for (int i = 11; i <= 50; ++i) p.push_back(p.back() * 0.999);
  EstimatorConfig cfg;
  cfg.m = 10;
  EXPECT_NEAR(estimate_zipf_exponent(p, cfg).s_hat, 1.2, 1e-12);
  cfg.m = 1000;
  EXPECT_EQ(estimate_zipf_exponent(p, cfg).m_used, 50U);
}

TEST(Estimator, Errors) {
  const std::vector<double> one = {1.0};
  EXPECT_THROW(estimate_zipf_exponent(one), DomainError);
  const std::vector<double> unsorted = {0.2, 0.5};
  EXPECT_THROW(estimate_zipf_exponent(unsorted), InvalidDistribution);
  const std::vector<double> negative = {0.5, -0.1};
  EXPECT_THROW(estimate_zipf_exponent(negative), InvalidDistribution);
  EstimatorConfig cfg;
  cfg.m = 1;
  const std::vector<double> ok = {0.5, 0.25};
  EXPECT_THROW(estimate_zipf_exponent(ok, cfg), DomainError);
}

TEST(Estimator, FloorsZeroProbabilities) {
  const std::vector<double> p = {0.9, 0.1, 0.0};
  const auto e = estimate_zipf_exponent(p);
  EXPECT_TRUE(std::isfinite(e.s_hat));
  EXPECT_GT(e.s_hat, 0.0);
}

}  // namespace
}  // namespace miro
