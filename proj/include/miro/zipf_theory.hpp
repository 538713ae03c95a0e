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

// Surprise and cross-entropy of truncated samplers under Zipf statistics.
//
// The model distribution is p(i) = 1 / (i^s * H_{N,s}) over ranks 1..N.
// Every quantity returned here is in bits. A sampling temperature T acts on
// a Zipf distribution by replacing s with s/T, so all functions evaluate at
// the effective exponent `ZipfParams::effective_s()`.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "miro/error.hpp"

namespace miro {

class ZipfParams {
 public:
  ZipfParams(double s, std::uint64_t n_vocab, double temperature = 1.0)
      : s_(s), n_vocab_(n_vocab), temperature_(temperature) {
    if (n_vocab_ < 1) throw DomainError("ZipfParams: n_vocab must be >= 1");
    if (!(temperature_ > 0.0) || !std::isfinite(temperature_))
      throw DomainError("ZipfParams: temperature must be > 0");
    if (!std::isfinite(s_)) throw DomainError("ZipfParams: s must be finite");
  }

  double s() const noexcept { return s_; }
  double epsilon() const noexcept { return s_ - 1.0; }
  std::uint64_t n_vocab() const noexcept { return n_vocab_; }
  double temperature() const noexcept { return temperature_; }

  double effective_s() const noexcept { return s_ / temperature_; }
  double effective_epsilon() const noexcept { return effective_s() - 1.0; }

  friend bool operator==(const ZipfParams&, const ZipfParams&) = default;

 private:
  double s_;
  std::uint64_t n_vocab_;
  double temperature_;
};

/// sum_{n=1..N} n^{-s}, summed smallest term first.
inline double harmonic_exact(std::uint64_t n, double s) {
  if (n < 1) throw DomainError("harmonic_exact: N must be >= 1");
  double sum = 0.0;
  for (std::uint64_t i = n; i >= 1; --i) sum += std::pow(static_cast<double>(i), -s);
  return sum;
}

/// Constants of the closed-form top-k approximation. a1/a2 belong to the
/// lower bound and b1/b2 to the upper bound on sum_i log2(i)/i^s; b3 = 1+0.7e.
/// h_n caches H_{N,s}.
struct ApproxConstants {
  double a1;
  double a2;
  double b1;
  double b2;
  double b3;
  double h_n;

  static ApproxConstants from(const ZipfParams& params) {
    const double s = params.effective_s();
    const double e = s - 1.0;
    const double ln2 = std::numbers::ln2;
    const double ln3 = std::log(3.0);
    const double tail = (ln3 + 1.0 / e) / (e * ln2 * std::pow(3.0, e));
    ApproxConstants c{};
    c.a1 = s * (1.0 / std::pow(2.0, s) + tail);
    c.a2 = s / (e * ln2);
    c.b1 = s * (1.0 / std::pow(2.0, s) + std::log2(3.0) / std::pow(3.0, s) + tail);
    c.b2 = s / (e * ln2);
    c.b3 = 1.0 + 0.7 * e;
    c.h_n = harmonic_exact(params.n_vocab(), s);
    return c;
  }
};

namespace detail {

inline void require_positive_epsilon(double e, const char* what) {
  if (!(e > 0.0)) throw DomainError(std::string(what) + ": requires s > 1 (epsilon > 0)");
}

inline void require_rank(std::uint64_t rank, const ZipfParams& params, const char* what) {
  if (rank < 1 || rank > params.n_vocab())
    throw DomainError(std::string(what) + ": rank " + std::to_string(rank) +
                      " outside [1, " + std::to_string(params.n_vocab()) + "]");
}

inline void require_theorem_range(const ZipfParams& params, const char* what) {
  const double s = params.effective_s();
  if (!(s > 1.0) || s > 1.0 / std::numbers::ln2)
    throw DomainError(std::string(what) + ": requires 1 < s <= 1/ln 2, got s = " +
                      std::to_string(s));
}

/// Round half up, then clamp to [1, n].
inline std::uint64_t round_rank(double x, std::uint64_t n) {
  if (!(x >= 1.0)) return 1;  // also catches NaN
  const double r = std::floor(x + 0.5);
  if (r >= static_cast<double>(n)) return n;
  return static_cast<std::uint64_t>(r);
}

}  // namespace detail

/// Empirical fit H_{k,s} ~ 0.7 + (1 - k^{-e})/e.
inline double harmonic_approx(std::uint64_t k, const ZipfParams& params) {
  const double e = params.effective_epsilon();
  detail::require_positive_epsilon(e, "harmonic_approx");
  if (k < 1) throw DomainError("harmonic_approx: k must be >= 1");
  return 0.7 + (1.0 - std::pow(static_cast<double>(k), -e)) / e;
}

/// Integral of t^{-s} over [1, N]: (1 - N^{-e})/e.
inline double harmonic_integral_approx(std::uint64_t n, const ZipfParams& params) {
  const double e = params.effective_epsilon();
  detail::require_positive_epsilon(e, "harmonic_integral_approx");
  if (n < 1) throw DomainError("harmonic_integral_approx: N must be >= 1");
  return (1.0 - std::pow(static_cast<double>(n), -e)) / e;
}

/// Integral bounds on H_{k,s}: (1-(k+1)^{-e})/e <= H_{k,s} <= 1 + (1-k^{-e})/e.
inline std::pair<double, double> harmonic_bounds(std::uint64_t k, const ZipfParams& params) {
  const double e = params.effective_epsilon();
  detail::require_positive_epsilon(e, "harmonic_bounds");
  const double kd = static_cast<double>(k);
  return {(1.0 - std::pow(kd + 1.0, -e)) / e, 1.0 + (1.0 - std::pow(kd, -e)) / e};
}

inline double zipf_pmf(std::uint64_t rank, const ZipfParams& params) {
  detail::require_rank(rank, params, "zipf_pmf");
  const double s = params.effective_s();
  return 1.0 / (std::pow(static_cast<double>(rank), s) * harmonic_exact(params.n_vocab(), s));
}

inline double surprise_of_rank(std::uint64_t rank, const ZipfParams& params) {
  detail::require_rank(rank, params, "surprise_of_rank");
  const double s = params.effective_s();
  return s * std::log2(static_cast<double>(rank)) + std::log2(harmonic_exact(params.n_vocab(), s));
}

/// d/dx of surprise_of_rank treated as a function of a continuous rank.
inline double surprise_slope(double rank, const ZipfParams& params) {
  if (!(rank > 0.0)) throw DomainError("surprise_slope: rank must be > 0");
  return params.effective_s() / (rank * std::numbers::ln2);
}

/// H(P_{M_k}, P_M) by direct summation.
inline double topk_cross_entropy_exact(std::uint64_t k, const ZipfParams& params) {
  detail::require_rank(k, params, "topk_cross_entropy_exact");
  const double s = params.effective_s();
  double weighted = 0.0;
  double norm = 0.0;
  for (std::uint64_t i = k; i >= 1; --i) {
    const double w = std::pow(static_cast<double>(i), -s);
    weighted += std::log2(static_cast<double>(i)) * w;
    norm += w;
  }
  return s * weighted / norm + std::log2(harmonic_exact(params.n_vocab(), s));
}

/// Closed-form approximation of H(P_{M_k}, P_M). Valid for 1 < s <= 1/ln 2
/// and k >= 2; use topk_cross_entropy_exact at k = 1.
inline double topk_cross_entropy_approx(std::uint64_t k, const ZipfParams& params,
                                        const ApproxConstants& c) {
  detail::require_theorem_range(params, "topk_cross_entropy_approx");
  if (k < 2) throw DomainError("topk_cross_entropy_approx: requires k >= 2");
  if (k > params.n_vocab()) throw DomainError("topk_cross_entropy_approx: k exceeds N");
  const double e = params.effective_epsilon();
  const double kd = static_cast<double>(k);
  const double ratio =
      (c.b2 * c.b3 * (std::log(kd) + 1.0 / e) - c.b1) / (c.b1 * (c.b3 * std::pow(kd, e) - 1.0));
  return (c.b1 * e / c.b3) * (1.0 - ratio) + std::log2(c.h_n);
}

inline double topk_cross_entropy_approx(std::uint64_t k, const ZipfParams& params) {
  return topk_cross_entropy_approx(k, params, ApproxConstants::from(params));
}

namespace detail {

struct ToppTerms {
  double e;
  double b;
  double h_n;
};

inline ToppTerms topp_terms(double p, const ZipfParams& params, const char* what) {
  const double e = params.effective_epsilon();
  require_positive_epsilon(e, what);
  const double b = 1.0 + 0.7 * e;
  const double h_n = harmonic_exact(params.n_vocab(), params.effective_s());
  if (!(p > 0.0) || !(p < 1.0) || !(p < b / (e * h_n)))
    throw DomainError(std::string(what) + ": p = " + std::to_string(p) +
                      " outside (0, min(1, b/(e H_N)))");
  return {e, b, h_n};
}

/// The top-p surprise before linearizing the logarithm.
inline double topp_surprise_unapproximated(double p, const ZipfParams& params) {
  const auto t = topp_terms(p, params, "topp_surprise");
  return -((1.0 + t.e) / t.e) * std::log2(t.b - t.h_n * t.e * p) + std::log2(t.h_n);
}

}  // namespace detail

/// Rank at which the fitted cumulative Zipf mass reaches p.
inline std::uint64_t topp_rank(double p, const ZipfParams& params) {
  const auto t = detail::topp_terms(p, params, "topp_rank");
  const double k = std::pow(t.b - t.e * p * t.h_n, -1.0 / t.e);
  return detail::round_rank(k, params.n_vocab());
}

/// Surprise of the token at the top-p cut, linear in p.
inline double topp_surprise_approx(double p, const ZipfParams& params) {
  const auto t = detail::topp_terms(p, params, "topp_surprise_approx");
  return ((1.0 + t.e) / (t.b * std::numbers::ln2)) * t.h_n * p -
         ((1.0 + t.e) / t.e) * std::log2(t.b) + std::log2(t.h_n);
}

/// Closed-form approximation of H(P_{M_p}, P_M).
inline double topp_cross_entropy_approx(double p, const ZipfParams& params,
                                        const ApproxConstants& c) {
  detail::require_theorem_range(params, "topp_cross_entropy_approx");
  const double s = params.effective_s();
  const double e = s - 1.0;
  const double h_n = c.h_n;
  if (!(p > 0.0) || p > 1.0 || !(e * p * h_n < 1.0))
    throw DomainError("topp_cross_entropy_approx: requires 0 < p <= 1 and e p H_N < 1");
  return (s / (2.0 * std::numbers::ln2)) * (p * h_n + e * p * p * h_n * h_n) + std::log2(h_n);
}

inline double topp_cross_entropy_approx(double p, const ZipfParams& params) {
  detail::require_theorem_range(params, "topp_cross_entropy_approx");
  return topp_cross_entropy_approx(p, params, ApproxConstants::from(params));
}

/// Smallest k whose cumulative Zipf mass is at least p.
inline std::uint64_t topp_cut_exact(double p, const ZipfParams& params) {
  if (!(p > 0.0) || p > 1.0) throw DomainError("topp_cut_exact: requires 0 < p <= 1");
  const double s = params.effective_s();
  const double target = p * harmonic_exact(params.n_vocab(), s);
  double cum = 0.0;
  for (std::uint64_t k = 1; k <= params.n_vocab(); ++k) {
    cum += std::pow(static_cast<double>(k), -s);
    if (cum >= target) return k;
  }
  return params.n_vocab();
}

/// H(P_{M_p}, P_M) by truncating at the exact top-p cut and summing.
inline double topp_cross_entropy_exact(double p, const ZipfParams& params) {
  return topk_cross_entropy_exact(topp_cut_exact(p, params), params);
}

/// Prefix sums of the Zipf weights for O(1) exact top-k and O(log N) exact
/// top-p cross-entropy. Sums run in ascending rank, so values can differ
/// from the direct functions in the last few ulps.
class ZipfTable {
 public:
  explicit ZipfTable(const ZipfParams& params) : params_(params) {
    const std::uint64_t n = params.n_vocab();
    const double s = params.effective_s();
    weight_.assign(n + 1, 0.0);
    log_weight_.assign(n + 1, 0.0);
    for (std::uint64_t i = 1; i <= n; ++i) {
      const double w = std::pow(static_cast<double>(i), -s);
      weight_[i] = weight_[i - 1] + w;
      log_weight_[i] = log_weight_[i - 1] + std::log2(static_cast<double>(i)) * w;
    }
    log2_h_ = std::log2(harmonic_exact(n, s));
  }

  const ZipfParams& params() const { return params_; }

  double topk_cross_entropy(std::uint64_t k) const {
    detail::require_rank(k, params_, "ZipfTable::topk_cross_entropy");
    return params_.effective_s() * log_weight_[k] / weight_[k] + log2_h_;
  }

  std::uint64_t topp_cut(double p) const {
    if (!(p > 0.0) || p > 1.0) throw DomainError("ZipfTable::topp_cut: requires 0 < p <= 1");
    const double target = p * weight_.back();
    const auto it = std::lower_bound(weight_.begin() + 1, weight_.end(), target);
    if (it == weight_.end()) return params_.n_vocab();
    return static_cast<std::uint64_t>(it - weight_.begin());
  }

  double topp_cross_entropy(double p) const { return topk_cross_entropy(topp_cut(p)); }

 private:
  ZipfParams params_;
  std::vector<double> weight_;
  std::vector<double> log_weight_;
  double log2_h_ = 0.0;
};

}  // namespace miro
