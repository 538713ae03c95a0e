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

// The distribution pipeline shared by every decoder: logits to probabilities,
// temperature, repetition penalty, top-k / top-p truncation and sampling.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "miro/error.hpp"
#include "miro/random.hpp"

namespace miro {

using TokenId = std::uint32_t;

/// Next-token probabilities, sorted nonincreasing, with their token ids.
/// Tokens with zero probability are omitted, so `size()` may be smaller than
/// `n_vocab_full`.
struct TokenDistribution {
  std::vector<TokenId> token_ids;
  std::vector<double> probs;
  std::size_t n_vocab_full = 0;

  std::size_t size() const noexcept { return probs.size(); }
  TokenId modal_token() const { return token_ids.front(); }

  std::optional<std::size_t> index_of(TokenId id) const {
    const auto it = std::find(token_ids.begin(), token_ids.end(), id);
    if (it == token_ids.end()) return std::nullopt;
    return static_cast<std::size_t>(it - token_ids.begin());
  }

  /// Probability of `id`, zero when it is not in the support.
  double prob_of(TokenId id) const {
    const auto idx = index_of(id);
    return idx ? probs[*idx] : 0.0;
  }

  /// Throws InvalidDistribution unless every invariant holds.
  void validate(double sum_tolerance = 1e-9) const {
    if (probs.empty()) throw InvalidDistribution("distribution is empty");
    if (token_ids.size() != probs.size())
      throw InvalidDistribution("token_ids and probs differ in length");
    std::vector<bool> seen(n_vocab_full, false);
    double sum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      const double p = probs[i];
      if (!(p > 0.0 && p <= 1.0))
        throw InvalidDistribution("probability outside (0, 1] at index " + std::to_string(i));
      if (i > 0 && p > probs[i - 1])
        throw InvalidDistribution("probabilities not sorted descending at index " +
                                  std::to_string(i));
      const TokenId id = token_ids[i];
      if (id >= n_vocab_full)
        throw InvalidDistribution("token id " + std::to_string(id) + " outside vocabulary");
      if (seen[id]) throw InvalidDistribution("duplicate token id " + std::to_string(id));
      seen[id] = true;
      sum += p;
    }
    if (std::abs(sum - 1.0) > sum_tolerance)
      throw InvalidDistribution("probabilities sum to " + std::to_string(sum));
  }

  /// Sorts (probability descending, id ascending), drops zeros and
  /// normalizes. Weights need not sum to one.
  static TokenDistribution from_weights(std::vector<TokenId> ids, std::vector<double> weights,
                                        std::size_t n_vocab_full) {
    if (ids.size() != weights.size())
      throw InvalidDistribution("from_weights: ids and weights differ in length");
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (double w : weights)
      if (!(w >= 0.0) || !std::isfinite(w))
        throw InvalidDistribution("from_weights: weights must be finite and nonnegative");
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (weights[a] != weights[b]) return weights[a] > weights[b];
      return ids[a] < ids[b];
    });
    TokenDistribution d;
    d.n_vocab_full = n_vocab_full;
    double total = 0.0;
    for (std::size_t i : order) {
      if (weights[i] <= 0.0) break;
      d.token_ids.push_back(ids[i]);
      d.probs.push_back(weights[i]);
      total += weights[i];
    }
    if (d.probs.empty()) throw InvalidDistribution("from_weights: all weights are zero");
    for (double& p : d.probs) p /= total;
    return d;
  }
};

/// Pre-softmax scores with their token ids.
struct LogitVector {
  std::vector<TokenId> token_ids;
  std::vector<double> scores;
  std::size_t n_vocab_full = 0;
};

/// Natural-log scores of a distribution.
inline LogitVector to_logits(const TokenDistribution& dist) {
  LogitVector out;
  out.token_ids = dist.token_ids;
  out.n_vocab_full = dist.n_vocab_full;
  out.scores.reserve(dist.size());
  for (double p : dist.probs) out.scores.push_back(std::log(p));
  return out;
}

inline TokenDistribution softmax_to_distribution(const LogitVector& logits,
                                                 double temperature = 1.0) {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw DomainError("softmax_to_distribution: temperature must be > 0");
  if (logits.token_ids.size() != logits.scores.size())
    throw InvalidDistribution("softmax_to_distribution: ids and scores differ in length");
  double max_score = -std::numeric_limits<double>::infinity();
  for (double s : logits.scores)
    if (std::isfinite(s)) max_score = std::max(max_score, s);
  if (!std::isfinite(max_score))
    throw InvalidDistribution("softmax_to_distribution: no finite score");
  std::vector<double> weights;
  weights.reserve(logits.scores.size());
  for (double s : logits.scores) {
    if (std::isnan(s) || s == std::numeric_limits<double>::infinity())
      throw InvalidDistribution("softmax_to_distribution: scores must be finite or -inf");
    weights.push_back(std::exp((s - max_score) / temperature));
  }
  const std::size_t n = logits.n_vocab_full ? logits.n_vocab_full : logits.token_ids.size();
  return TokenDistribution::from_weights(logits.token_ids, std::move(weights), n);
}

namespace detail {

inline TokenDistribution keep_prefix(const TokenDistribution& dist, std::size_t count) {
  if (count >= dist.size()) return dist;
  TokenDistribution out;
  out.n_vocab_full = dist.n_vocab_full;
  out.token_ids.assign(dist.token_ids.begin(), dist.token_ids.begin() + count);
  out.probs.assign(dist.probs.begin(), dist.probs.begin() + count);
  double total = 0.0;
  for (double p : out.probs) total += p;
  for (double& p : out.probs) p /= total;
  return out;
}

}  // namespace detail

inline TokenDistribution top_k_filter(const TokenDistribution& dist, std::size_t k) {
  if (k < 1) throw DomainError("top_k_filter: k must be >= 1");
  return detail::keep_prefix(dist, k);
}

/// Number of leading tokens top-p keeps: the smallest prefix whose mass is at
/// least p. Ties at the cut are not expanded.
inline std::size_t top_p_count(const TokenDistribution& dist, double p) {
  if (!(p > 0.0) || p > 1.0) throw DomainError("top_p_filter: p must lie in (0, 1]");
  if (p == 1.0) return dist.size();
  double cum = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    cum += dist.probs[i];
    if (cum >= p) return i + 1;
  }
  return dist.size();
}

inline TokenDistribution top_p_filter(const TokenDistribution& dist, double p) {
  return detail::keep_prefix(dist, top_p_count(dist, p));
}

enum class PenaltyMode {
  kNegativeOnly,  // only negative scores are scaled (multiplied by theta)
  kSymmetric,     // also divide positive scores by theta
};

/// Lowers the scores of tokens already present in `generated` (membership
/// only; counts are ignored). theta = 1 is the identity.
inline LogitVector repetition_penalty(LogitVector logits, std::span<const TokenId> generated,
                                      double theta,
                                      PenaltyMode mode = PenaltyMode::kSymmetric) {
  if (!(theta >= 1.0) || !std::isfinite(theta))
    throw DomainError("repetition_penalty: theta must be >= 1");
  if (theta == 1.0 || generated.empty()) return logits;
  TokenId max_id = 0;
  for (TokenId id : generated) max_id = std::max(max_id, id);
  for (TokenId id : logits.token_ids) max_id = std::max(max_id, id);
  std::vector<bool> member(static_cast<std::size_t>(max_id) + 1, false);
  for (TokenId id : generated) member[id] = true;
  for (std::size_t i = 0; i < logits.scores.size(); ++i) {
    if (!member[logits.token_ids[i]]) continue;
    double& score = logits.scores[i];
    if (score < 0.0)
      score *= theta;
    else if (score > 0.0 && mode == PenaltyMode::kSymmetric)
      score /= theta;
  }
  return logits;
}

struct SampleOutcome {
  TokenId token_id = 0;
  /// Index of the token in the distribution it was drawn from.
  std::size_t index = 0;
  /// -log2 of the token's probability in the distribution actually sampled.
  double surprise_bits = 0.0;
  /// -log2 of the token's probability under the untruncated model.
  double surprise_model_bits = 0.0;
};

/// Surprise in bits, with -0 folded to +0.
inline double surprise_bits_of(double p) { return p >= 1.0 ? 0.0 : -std::log2(p); }

/// Inverse-CDF draw with one uniform variate. `model` is the pre-truncation
/// distribution used for `surprise_model_bits`; without it both surprises
/// are taken from `dist`.
inline SampleOutcome sample(const TokenDistribution& dist, Rng& rng,
                            const TokenDistribution* model = nullptr) {
  if (dist.probs.empty()) throw InvalidDistribution("sample: empty distribution");
  double total = 0.0;
  for (double p : dist.probs) total += p;
  const double u = rng.uniform() * total;
  std::size_t chosen = dist.size() - 1;
  double cum = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    cum += dist.probs[i];
    if (u < cum) {
      chosen = i;
      break;
    }
  }
  SampleOutcome out;
  out.token_id = dist.token_ids[chosen];
  out.index = chosen;
  out.surprise_bits = surprise_bits_of(dist.probs[chosen]);
  if (model == nullptr) {
    out.surprise_model_bits = out.surprise_bits;
  } else {
    // Truncations keep a prefix, so the index usually lines up.
    double p = 0.0;
    if (chosen < model->size() && model->token_ids[chosen] == out.token_id)
      p = model->probs[chosen];
    else
      p = model->prob_of(out.token_id);
    if (!(p > 0.0)) throw InvalidDistribution("sample: token missing from model distribution");
    out.surprise_model_bits = surprise_bits_of(p);
  }
  return out;
}

}  // namespace miro
