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

// Feedback-controlled truncation samplers that steer per-token surprise
// toward a target tau. Each step samples one token, measures its surprise S,
// forms an error e and updates the control variable mu <- mu - eta * e.
//
//   kV1       adaptive top-k; k follows from mu and a Zipf exponent fitted
//             to the current distribution.
//   kV2       keeps every token whose surprise is at most mu.
//   kAverage  as kV2, but e is the running mean surprise minus tau.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include "miro/decoding.hpp"
#include "miro/error.hpp"
#include "miro/random.hpp"
#include "miro/zipf_estimator.hpp"

namespace miro {

enum class MirostatVariant { kV1, kV2, kAverage };

/// Which surprise feeds the error term: the renormalized truncated
/// distribution that was sampled, or the controller's input distribution.
enum class ErrorSource { kSampled, kModel };

inline const char* variant_name(MirostatVariant v) {
  switch (v) {
    case MirostatVariant::kV1: return "miro";
    case MirostatVariant::kV2: return "miro2";
    case MirostatVariant::kAverage: return "miroavg";
  }
  return "?";
}

struct MirostatState {
  MirostatVariant variant = MirostatVariant::kV1;
  double tau = 3.0;
  double mu = 6.0;
  double eta = 1.0;
  std::size_t m = 100;
  std::size_t step_count = 0;
  double surprise_sum_bits = 0.0;
  /// Exponent reused when the estimator cannot run on a step.
  double last_s_hat = 1.1;
  double epsilon_floor = 1e-3;
  ErrorSource error_source = ErrorSource::kSampled;

  /// Fresh controller with mu = 2 tau.
  static MirostatState make(MirostatVariant variant, double tau, double eta = 1.0,
                            std::size_t m = 100) {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw DomainError("mirostat: tau must be > 0");
    if (!(eta > 0.0) || !std::isfinite(eta)) throw DomainError("mirostat: eta must be > 0");
    if (m < 2) throw DomainError("mirostat: m must be >= 2");
    MirostatState s;
    s.variant = variant;
    s.tau = tau;
    s.mu = 2.0 * tau;
    s.eta = eta;
    s.m = m;
    return s;
  }
};

struct StepTrace {
  TokenId token_id = 0;
  /// Surprise fed to the error term.
  double surprise_bits = 0.0;
  double error = 0.0;
  double mu_before = 0.0;
  double mu_after = 0.0;
  /// k_used for kV1, number of kept tokens for kV2 / kAverage.
  std::size_t kept = 0;
  /// Largest pre-renormalization surprise among kept tokens.
  double max_kept_surprise_bits = 0.0;
  std::optional<double> s_hat;
  bool estimate_fallback = false;
};

struct StepResult {
  SampleOutcome outcome;
  StepTrace trace;
  MirostatState state;
};

/// k = (e 2^mu / (1 - N^{-e}))^{1/s}, evaluated in log space, rounded half up
/// and clamped to [1, n_vocab].
inline std::size_t mirostat_k_from_mu(double s_hat, double epsilon_hat, double mu,
                                      std::size_t n_vocab) {
  if (!std::isfinite(mu)) throw DomainError("mirostat_k_from_mu: mu must be finite");
  if (n_vocab < 1) throw DomainError("mirostat_k_from_mu: n_vocab must be >= 1");
  if (!(s_hat > 0.0) || !(epsilon_hat > 0.0))
    throw DomainError("mirostat_k_from_mu: requires s_hat > 0 and epsilon_hat > 0");
  const double n = static_cast<double>(n_vocab);
  const double log2_k =
      (std::log2(epsilon_hat) + mu - std::log2(-std::expm1(-epsilon_hat * std::log(n)))) / s_hat;
  if (log2_k >= std::log2(n)) return n_vocab;
  const double k = std::floor(std::exp2(log2_k) + 0.5);
  if (!(k >= 1.0)) return 1;
  return std::min(n_vocab, static_cast<std::size_t>(k));
}

inline std::size_t mirostat_k_from_mu(double s_hat, double mu, std::size_t n_vocab,
                                      double epsilon_floor = 1e-3) {
  const double e = s_hat - 1.0;
  if (!(e >= epsilon_floor))
    throw DomainError("mirostat_k_from_mu: s_hat - 1 below epsilon floor");
  return mirostat_k_from_mu(s_hat, e, mu, n_vocab);
}

namespace detail {

inline void check_variant(const MirostatState& state, MirostatVariant want, const char* what) {
  if (state.variant != want)
    throw DomainError(std::string(what) + ": controller variant mismatch");
}

inline StepResult finish_step(const TokenDistribution& dist, const TokenDistribution& kept,
                              MirostatState state, Rng& rng, StepTrace trace) {
  SampleOutcome outcome = sample(kept, rng, &dist);
  const double s = state.error_source == ErrorSource::kSampled ? outcome.surprise_bits
                                                               : outcome.surprise_model_bits;
  double error = s - state.tau;
  if (state.variant == MirostatVariant::kAverage)
    error = (state.surprise_sum_bits + s) / static_cast<double>(state.step_count + 1) - state.tau;
  trace.token_id = outcome.token_id;
  trace.surprise_bits = s;
  trace.error = error;
  trace.mu_before = state.mu;
  trace.mu_after = state.mu - state.eta * error;
  state.mu = trace.mu_after;
  state.step_count += 1;
  state.surprise_sum_bits += s;
  return {outcome, trace, state};
}

/// Tokens kept by the surprise threshold; at least the modal token.
inline std::size_t surprise_threshold_count(const TokenDistribution& dist, double mu) {
  std::size_t kept = 0;
  while (kept < dist.size() && surprise_bits_of(dist.probs[kept]) <= mu) ++kept;
  return kept == 0 ? 1 : kept;
}

inline StepResult threshold_step(const TokenDistribution& dist, const MirostatState& state,
                                 Rng& rng) {
  const std::size_t kept_count = surprise_threshold_count(dist, state.mu);
  StepTrace trace;
  trace.kept = kept_count;
  trace.max_kept_surprise_bits = surprise_bits_of(dist.probs[kept_count - 1]);
  return finish_step(dist, detail::keep_prefix(dist, kept_count), state, rng, trace);
}

}  // namespace detail

/// One adaptive top-k step. `dist` is the full distribution, sorted
/// descending. If the exponent cannot be estimated (fewer than two tokens,
/// or a flat distribution) the previous estimate is reused.
inline StepResult mirostat_step(const TokenDistribution& dist, const MirostatState& state,
                                Rng& rng) {
  detail::check_variant(state, MirostatVariant::kV1, "mirostat_step");
  if (dist.probs.empty()) throw InvalidDistribution("mirostat_step: empty distribution");

  StepTrace trace;
  double s_hat = state.last_s_hat;
  double eps_hat = std::max(s_hat - 1.0, state.epsilon_floor);
  if (dist.size() >= 2) {
    EstimatorConfig cfg;
    cfg.m = state.m;
    cfg.epsilon_floor = state.epsilon_floor;
    const auto est = estimate_zipf_exponent(dist.probs, cfg);
    if (est.s_hat > 0.0 && std::isfinite(est.s_hat)) {
      s_hat = est.s_hat;
      eps_hat = est.epsilon_hat;
    } else {
      trace.estimate_fallback = true;
    }
  } else {
    trace.estimate_fallback = true;
  }

  const std::size_t n = dist.n_vocab_full ? dist.n_vocab_full : dist.size();
  const std::size_t k = mirostat_k_from_mu(s_hat, eps_hat, state.mu, n);
  trace.kept = k;
  trace.s_hat = s_hat;
  const std::size_t kept_count = std::min(k, dist.size());
  trace.max_kept_surprise_bits = surprise_bits_of(dist.probs[kept_count - 1]);

  MirostatState next = state;
  next.last_s_hat = s_hat;
  return detail::finish_step(dist, top_k_filter(dist, k), next, rng, trace);
}

inline StepResult mirostat2_step(const TokenDistribution& dist, const MirostatState& state,
                                 Rng& rng) {
  detail::check_variant(state, MirostatVariant::kV2, "mirostat2_step");
  if (dist.probs.empty()) throw InvalidDistribution("mirostat2_step: empty distribution");
  return detail::threshold_step(dist, state, rng);
}

inline StepResult mirostat_avg_step(const TokenDistribution& dist, const MirostatState& state,
                                    Rng& rng) {
  detail::check_variant(state, MirostatVariant::kAverage, "mirostat_avg_step");
  if (dist.probs.empty()) throw InvalidDistribution("mirostat_avg_step: empty distribution");
  return detail::threshold_step(dist, state, rng);
}

/// Dispatches on `state.variant`.
inline StepResult controller_step(const TokenDistribution& dist, const MirostatState& state,
                                  Rng& rng) {
  switch (state.variant) {
    case MirostatVariant::kV1: return mirostat_step(dist, state, rng);
    case MirostatVariant::kV2: return mirostat2_step(dist, state, rng);
    case MirostatVariant::kAverage: return mirostat_avg_step(dist, state, rng);
  }
  throw DomainError("controller_step: unknown variant");
}

}  // namespace miro
