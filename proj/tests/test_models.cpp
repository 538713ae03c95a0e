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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "miro/generate.hpp"
#include "miro/models/ngram_model.hpp"
#include "miro/models/replay.hpp"
#include "miro/models/stdio_client.hpp"
#include "miro/models/zipf_source.hpp"

namespace miro {
namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("miro_test_" + name)).string();
}

TEST(ZipfSource, StationaryAndSorted) {
  ZipfSource src(ZipfParams(1.1, 1000));
  const auto a = src.next_distribution({});
  const std::vector<TokenId> prefix = {3, 1, 4};
  const auto b = src.next_distribution(prefix);
  EXPECT_EQ(a.get(), b.get());
  EXPECT_NO_THROW(a->validate());
  EXPECT_EQ(a->size(), 1000U);
  EXPECT_EQ(a->token_ids[0], 0U);
  EXPECT_NEAR(a->probs[0], 1.0 / 5.57282667635274251473561301464, 1e-13);
  EXPECT_EQ(src.name(), "zipf(s=1.1,N=1000)");
  EXPECT_TRUE(src.thread_safe());
}

TEST(ZipfSource, EntropyMatchesReference) {
  ZipfSource src(ZipfParams(1.1, 50000));
  EXPECT_NEAR(src.entropy_bits(), 9.32370892673152909541151435128, 1e-9);
}

TEST(Tokenizer, WordsAndPunctuation) {
  const auto t = tokenize_text("Call me Ishmael. It's 1851!");
  EXPECT_EQ(t, (std::vector<std::string>{"call", "me", "ishmael", ".", "it's", "1851", "!"}));
  EXPECT_TRUE(tokenize_text("   ").empty());
}

TEST(Vocabulary, FrequencyOrderAndRoundTrip) {
  const auto c = corpus_from_text("b a b c b a");
  EXPECT_EQ(c.vocab.word(0), "b");
  EXPECT_EQ(c.vocab.word(1), "a");
  EXPECT_EQ(c.vocab.word(2), "c");
  EXPECT_EQ(c.vocab.decode(c.tokens), "b a b c b a");
  const std::vector<std::string> unknown = {"zebra"};
  EXPECT_THROW(c.vocab.encode(unknown), ConfigError);
  EXPECT_THROW(corpus_from_text(""), FormatError);
}

TEST(NGram, HandComputedBackoff) {
  const auto c = corpus_from_text("a b a b");
  NGramConfig cfg;
  cfg.order = 2;
  cfg.alpha = 0.01;
  cfg.backoff = 0.4;
  const auto m = train_ngram(c.tokens, cfg);
  const TokenId a = *c.vocab.find("a");
  const TokenId b = *c.vocab.find("b");
  const std::vector<TokenId> after_a = {a};
  const auto d = m.distribution(after_a);
  EXPECT_NEAR(d.prob_of(b), 1.0 / 1.2, 1e-12);
  EXPECT_NEAR(d.prob_of(a), 0.2 / 1.2, 1e-12);
  const auto empty = m.distribution({});
  EXPECT_NEAR(empty.prob_of(a), 0.5, 1e-12);
  EXPECT_NO_THROW(d.validate());
}

TEST(NGram, HigherOrderUsesLongestContext) {
  const auto c = corpus_from_text("x y z x y w x y z");
  NGramConfig cfg;
  cfg.order = 3;
  const auto m = train_ngram(c.tokens, cfg);
  const std::vector<TokenId> ctx = {*c.vocab.find("x"), *c.vocab.find("y")};
  const auto d = m.distribution(ctx);
  EXPECT_EQ(d.modal_token(), *c.vocab.find("z"));
  EXPECT_GT(d.prob_of(*c.vocab.find("w")), d.prob_of(*c.vocab.find("x")));
  EXPECT_NO_THROW(d.validate());
}

TEST(NGram, Errors) {
  const std::vector<TokenId> tiny = {0, 1};
  NGramConfig cfg;
  cfg.order = 2;
  EXPECT_THROW(train_ngram({}, cfg), DomainError);
  cfg.order = 3;
  EXPECT_THROW(train_ngram(tiny, cfg), DomainError);
  cfg.order = 1;
  cfg.alpha = 0.0;
  EXPECT_THROW(train_ngram(tiny, cfg), DomainError);
  cfg.alpha = 0.01;
  cfg.backoff = 1.5;
  EXPECT_THROW(train_ngram(tiny, cfg), DomainError);
  cfg.backoff = 0.4;
  const auto m = train_ngram(tiny, cfg, 10);
  EXPECT_EQ(m.n_vocab(), 10U);
  const std::vector<TokenId> bad = {12};
  EXPECT_THROW(m.distribution(bad), DomainError);
}

TEST(NGram, CorpusModelIsValidAlongAGeneration) {
  const auto c = load_corpus(MIRO_CORPUS);
  auto m = train_ngram(c.tokens, NGramConfig{}, c.vocab.size());
  const auto rec = generate(m, parse_policy("top_k:40"), 50, 3);
  for (std::size_t i = 0; i < rec.tokens.size(); ++i) {
    const auto d = m.distribution(std::span<const TokenId>(rec.tokens).first(i));
    ASSERT_NO_THROW(d.validate(1e-9)) << i;
    ASSERT_EQ(d.size(), c.vocab.size());
  }
}

ReplayData sample_replay() {
  ReplayData d;
  d.n_vocab = 3;
  d.tokens = {0, 2, 1};
  d.rows = {0.5f, 0.25f, 0.25f, 0.1f, 0.2f, 0.7f, 0.3f, 0.3f, 0.4f};
  return d;
}

TEST(Replay, RoundTripAndTeacherForcing) {
  const std::string path = temp_path("replay.bin");
  write_replay(path, sample_replay());
  auto src = open_replay(path);
  EXPECT_EQ(src.n_vocab(), 3U);
  EXPECT_EQ(src.recorded_tokens(), (std::vector<TokenId>{0, 2, 1}));
  const auto rec = score_sequence(src, src.recorded_tokens());
  EXPECT_NEAR(rec.surprises_bits[0], 1.0, 1e-7);
  EXPECT_NEAR(rec.surprises_bits[1], -std::log2(0.7), 1e-7);
  EXPECT_NEAR(rec.surprises_bits[2], -std::log2(0.3), 1e-7);
  const auto& all = src.recorded_tokens();
  EXPECT_EQ(src.next_distribution(all), nullptr);
  const std::vector<TokenId> diverge = {1};
  try {
    src.next_distribution(diverge);
    FAIL();
  } catch (const ModelIoError& e) {
    EXPECT_EQ(e.step(), 1);
    EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos);
  }
  std::remove(path.c_str());
}

TEST(Replay, CorruptFilesAreRejected) {
  const std::string good = encode_replay(sample_replay());
  EXPECT_NO_THROW(decode_replay(good));
  EXPECT_THROW(decode_replay(good.substr(0, 10)), FormatError);
  EXPECT_THROW(decode_replay(good.substr(0, good.size() - 1)), FormatError);
  EXPECT_THROW(decode_replay(good + "x"), FormatError);
  std::string magic = good;
  magic[0] = 'X';
  EXPECT_THROW(decode_replay(magic), FormatError);
  std::string version = good;
  version[4] = 9;
  EXPECT_THROW(decode_replay(version), FormatError);
  auto bad_sum = sample_replay();
  bad_sum.rows[0] = 0.9f;
  EXPECT_THROW(decode_replay(encode_replay(bad_sum)), FormatError);
  auto bad_token = sample_replay();
  bad_token.tokens[1] = 7;
  EXPECT_THROW(decode_replay(encode_replay(bad_token)), FormatError);
  auto negative = sample_replay();
  negative.rows[0] = -0.5f;
  negative.rows[1] = 1.25f;
  EXPECT_THROW(decode_replay(encode_replay(negative)), FormatError);
  EXPECT_THROW(read_replay(temp_path("does_not_exist")), ModelIoError);
}

std::string server(const std::string& args = "") {
  return std::string(MIRO_FAKE_SERVER) + (args.empty() ? "" : " " + args);
}

TEST(Stdio, HandshakeAndDistributions) {
  StdioModelClient client(server());
  EXPECT_EQ(client.n_vocab(), 5U);
  EXPECT_EQ(client.name(), "stdio(fake)");
  const std::vector<TokenId> prefix = {4, 4};
  const auto d = client.next_distribution(prefix);
  EXPECT_EQ(d->modal_token(), 2U);
  EXPECT_NEAR(d->probs[0], 0.6, 1e-12);
  EXPECT_NEAR(d->prob_of(0), 0.1, 1e-12);
  EXPECT_NO_THROW(d->validate());
  EXPECT_EQ(client.close(), 0);
}

TEST(Stdio, GenerationMatchesAcrossRuns) {
  std::vector<TokenId> first;
  for (int round = 0; round < 2; ++round) {
    StdioModelClient client(server("good 7"));
    const auto rec = generate(client, parse_policy("top_k:3"), 20, 13);
    if (round == 0) first = rec.tokens;
    else EXPECT_EQ(first, rec.tokens);
  }
}

TEST(Stdio, VocabularyMismatch) {
  StdioClientConfig cfg;
  cfg.expected_n_vocab = 9;
  EXPECT_THROW(StdioModelClient(server("good 5"), cfg), ModelIoError);
}

void expect_step_error(const std::string& mode, const std::string& needle) {
  StdioClientConfig cfg;
  cfg.timeout = std::chrono::milliseconds(1500);
  StdioModelClient client(server(mode), cfg);
  try {
    (void)client.next_distribution({});
    FAIL() << mode;
  } catch (const ModelIoError& e) {
    EXPECT_EQ(e.step(), 0) << mode;
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << mode << ": " << e.what();
  }
}

TEST(Stdio, ProtocolErrors) {
  expect_step_error("badsum", "sum");
  expect_step_error("garbage", "malformed JSON");
  expect_step_error("error", "boom");
  expect_step_error("badid", ">= n_vocab");
  expect_step_error("exit", "status 3");
  expect_step_error("hang", "timed out");
}

TEST(Stdio, MissingCommand) {
  EXPECT_THROW(StdioModelClient("/nonexistent/model_server_binary"), ModelIoError);
}

TEST(Stdio, GenerateReportsStep) {
  StdioModelClient client(server("good 5"));
  auto policy = parse_policy("sample");
  EXPECT_NO_THROW(generate(client, policy, 5, 1));
}

}  // namespace
}  // namespace miro
