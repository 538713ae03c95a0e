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

// Count-based n-gram model with stupid backoff over an add-alpha unigram.
//
//   score(w | ctx) = c(ctx w) / c(ctx)            if c(ctx w) > 0
//                  = backoff * score(w | ctx')    otherwise (ctx' drops the
//                                                 oldest token)
//   score(w)       = (c(w) + alpha) / (T + alpha V)
//
// Scores are renormalized over the whole vocabulary so every conditional is a
// proper distribution.

#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "miro/decoding.hpp"
#include "miro/error.hpp"
#include "miro/models/model_source.hpp"

namespace miro {

/// Splits text into lowercase word tokens ([a-z0-9']+) and single-character
/// punctuation tokens. A multi-byte UTF-8 character outside words becomes
/// one token.
inline std::vector<std::string> tokenize_text(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (std::size_t i = 0; i < text.size();) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isalnum(c) || c == '\'') {
      word.push_back(static_cast<char>(std::tolower(c)));
      ++i;
    } else if (std::isspace(c)) {
      flush();
      ++i;
    } else {
      flush();
      std::size_t len = 1;
      if (c >= 0xF0) len = 4;
      else if (c >= 0xE0) len = 3;
      else if (c >= 0xC0) len = 2;
      len = std::min(len, text.size() - i);
      out.emplace_back(text.substr(i, len));
      i += len;
    }
  }
  flush();
  return out;
}

/// Token strings, indexed by id. Ids are assigned by descending corpus
/// frequency, ties broken by the string.
class Vocabulary {
 public:
  Vocabulary() = default;

  static Vocabulary from_tokens(std::span<const std::string> tokens) {
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& t : tokens) ++counts[t];
    std::vector<std::pair<std::string, std::size_t>> items(counts.begin(), counts.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    Vocabulary v;
    for (auto& [word, count] : items) {
      v.index_.emplace(word, static_cast<TokenId>(v.words_.size()));
      v.words_.push_back(word);
    }
    return v;
  }

  std::size_t size() const { return words_.size(); }
  const std::string& word(TokenId id) const { return words_.at(id); }

  std::optional<TokenId> find(const std::string& w) const {
    const auto it = index_.find(w);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<TokenId> encode(std::span<const std::string> tokens) const {
    std::vector<TokenId> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) {
      const auto id = find(t);
      if (!id) throw ConfigError("token not in vocabulary: '" + t + "'");
      ids.push_back(*id);
    }
    return ids;
  }

  std::string decode(std::span<const TokenId> ids) const {
    std::string out;
    for (TokenId id : ids) {
      if (!out.empty()) out.push_back(' ');
      out += word(id);
    }
    return out;
  }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

struct Corpus {
  Vocabulary vocab;
  std::vector<TokenId> tokens;
};

inline Corpus corpus_from_text(std::string_view text) {
  const auto words = tokenize_text(text);
  if (words.empty()) throw FormatError("corpus is empty");
  Corpus c;
  c.vocab = Vocabulary::from_tokens(words);
  c.tokens = c.vocab.encode(words);
  return c;
}

inline Corpus load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelIoError("cannot open corpus " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return corpus_from_text(ss.str());
}

struct NGramConfig {
  std::size_t order = 2;
  double alpha = 0.01;
  double backoff = 0.4;
};

class NGramModel final : public ModelSource {
 public:
  /// Counts every n-gram of order 1..config.order in `corpus_tokens`. The
  /// vocabulary size defaults to max id + 1.
  NGramModel(std::span<const TokenId> corpus_tokens, const NGramConfig& config,
             std::size_t n_vocab = 0)
      : config_(config) {
    if (corpus_tokens.empty()) throw DomainError("train_ngram: empty corpus");
    if (config.order < 1) throw DomainError("train_ngram: order must be >= 1");
    if (corpus_tokens.size() <= config.order)
      throw DomainError("train_ngram: corpus must be longer than the order");
    if (!(config.alpha > 0.0)) throw DomainError("train_ngram: alpha must be > 0");
    if (!(config.backoff > 0.0 && config.backoff <= 1.0))
      throw DomainError("train_ngram: backoff must lie in (0, 1]");
    TokenId max_id = 0;
    for (TokenId t : corpus_tokens) max_id = std::max(max_id, t);
    n_vocab_ = std::max<std::size_t>(n_vocab, static_cast<std::size_t>(max_id) + 1);

    unigram_.assign(n_vocab_, 0);
    for (TokenId t : corpus_tokens) ++unigram_[t];
    total_ = corpus_tokens.size();

    std::map<std::string, std::map<TokenId, std::size_t>> raw;
    for (std::size_t len = 1; len < config.order; ++len)
      for (std::size_t i = len; i < corpus_tokens.size(); ++i)
        ++raw[key(corpus_tokens.subspan(i - len, len))][corpus_tokens[i]];
    for (auto& [k, followers] : raw) {
      Context ctx;
      for (auto [tok, count] : followers) {
        ctx.followers.emplace_back(tok, count);
        ctx.total += count;
      }
      contexts_.emplace(k, std::move(ctx));
    }

    unigram_order_.resize(n_vocab_);
    for (std::size_t i = 0; i < n_vocab_; ++i) unigram_order_[i] = static_cast<TokenId>(i);
    std::stable_sort(unigram_order_.begin(), unigram_order_.end(),
                     [&](TokenId a, TokenId b) { return unigram_[a] > unigram_[b]; });
  }

  std::size_t n_vocab() const override { return n_vocab_; }
  bool thread_safe() const override { return true; }
  std::string name() const override {
    return "ngram(order=" + std::to_string(config_.order) + ",V=" + std::to_string(n_vocab_) + ")";
  }
  const NGramConfig& config() const { return config_; }

  std::shared_ptr<const TokenDistribution> next_distribution(
      std::span<const TokenId> prefix) override {
    return std::make_shared<const TokenDistribution>(distribution(prefix));
  }

  TokenDistribution distribution(std::span<const TokenId> prefix) const {
    for (TokenId t : prefix)
      if (t >= n_vocab_) throw DomainError("ngram: prefix token outside vocabulary");

    // Sparse scores from the observed contexts, longest first.
    std::vector<std::pair<TokenId, double>> sparse;
    std::vector<bool> assigned(n_vocab_, false);
    double factor = 1.0;
    const std::size_t max_len = std::min(config_.order - 1, prefix.size());
    for (std::size_t len = max_len; len >= 1; --len) {
      const auto it = contexts_.find(key(prefix.subspan(prefix.size() - len, len)));
      if (it != contexts_.end()) {
        const double inv_total = 1.0 / static_cast<double>(it->second.total);
        for (auto [tok, count] : it->second.followers) {
          if (assigned[tok]) continue;
          assigned[tok] = true;
          sparse.emplace_back(tok, factor * static_cast<double>(count) * inv_total);
        }
      }
      factor *= config_.backoff;
    }
    std::sort(sparse.begin(), sparse.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });

    const double uni_den =
        static_cast<double>(total_) + config_.alpha * static_cast<double>(n_vocab_);
    auto uni_score = [&](TokenId t) {
      return factor * (static_cast<double>(unigram_[t]) + config_.alpha) / uni_den;
    };

    // Merge the sparse list with the (already sorted) unigram remainder.
    TokenDistribution d;
    d.n_vocab_full = n_vocab_;
    d.token_ids.reserve(n_vocab_);
    d.probs.reserve(n_vocab_);
    std::size_t si = 0;
    std::size_t ui = 0;
    auto next_unassigned = [&] {
      while (ui < n_vocab_ && assigned[unigram_order_[ui]]) ++ui;
    };
    next_unassigned();
    while (si < sparse.size() || ui < n_vocab_) {
      bool take_sparse = false;
      if (si < sparse.size() && ui < n_vocab_) {
        const TokenId ut = unigram_order_[ui];
        const double us = uni_score(ut);
        take_sparse = sparse[si].second > us || (sparse[si].second == us && sparse[si].first < ut);
      } else {
        take_sparse = si < sparse.size();
      }
      if (take_sparse) {
        d.token_ids.push_back(sparse[si].first);
        d.probs.push_back(sparse[si].second);
        ++si;
      } else {
        const TokenId ut = unigram_order_[ui];
        d.token_ids.push_back(ut);
        d.probs.push_back(uni_score(ut));
        ++ui;
        next_unassigned();
      }
    }
    double total = 0.0;
    for (double p : d.probs) total += p;
    for (double& p : d.probs) p /= total;
    return d;
  }

 private:
  struct Context {
    std::vector<std::pair<TokenId, std::size_t>> followers;
    std::size_t total = 0;
  };

  static std::string key(std::span<const TokenId> ctx) {
    return std::string(reinterpret_cast<const char*>(ctx.data()), ctx.size() * sizeof(TokenId));
  }

  NGramConfig config_;
  std::size_t n_vocab_ = 0;
  std::vector<std::size_t> unigram_;
  std::size_t total_ = 0;
  std::vector<TokenId> unigram_order_;
  std::unordered_map<std::string, Context> contexts_;
};

inline NGramModel train_ngram(std::span<const TokenId> corpus_tokens, const NGramConfig& config = {},
                              std::size_t n_vocab = 0) {
  return NGramModel(corpus_tokens, config, n_vocab);
}

}  // namespace miro
