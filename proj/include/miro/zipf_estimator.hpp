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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "miro/error.hpp"

namespace miro {

struct EstimatorConfig {
  std::size_t m = 100;
  double probability_floor = 1e-12;
  double epsilon_floor = 1e-3;
};

struct ExponentEstimate {
  double s_hat;
  /// s_hat - 1, raised to the configured floor when s_hat is too close to 1.
  double epsilon_hat;
  std::size_t m_used;
};

/// Least-squares fit of the Zipf exponent to log-ratios of adjacent
/// probabilities:
///
///   s_hat = sum_i t_i b_i / sum_i t_i^2,
///   t_i = ln((i+1)/i),  b_i = ln(p_i / p_{i+1}),  i = 1..m-1.
///
/// The normalizer cancels in every ratio, so `probs_desc` may be unnormalized.
/// Input must already be sorted nonincreasing; it is checked, not sorted.
inline ExponentEstimate estimate_zipf_exponent(std::span<const double> probs_desc,
                                               const EstimatorConfig& config = {}) {
  if (config.m < 2) throw DomainError("estimate_zipf_exponent: m must be >= 2");
  const std::size_t m = std::min(config.m, probs_desc.size());
  if (m < 2) throw DomainError("estimate_zipf_exponent: need at least 2 probabilities");
  if (!(config.probability_floor > 0.0))
    throw DomainError("estimate_zipf_exponent: probability floor must be positive");
  if (!(probs_desc[0] >= 0.0))
    throw InvalidDistribution("estimate_zipf_exponent: negative or NaN probability");

  double num = 0.0;
  double den = 0.0;
  double prev = std::max(probs_desc[0], config.probability_floor);
  for (std::size_t i = 1; i < m; ++i) {
    if (probs_desc[i] > probs_desc[i - 1])
      throw InvalidDistribution("estimate_zipf_exponent: input is not sorted descending at index " +
                                std::to_string(i));
    if (!(probs_desc[i] >= 0.0))
      throw InvalidDistribution("estimate_zipf_exponent: negative or NaN probability");
    const double cur = std::max(probs_desc[i], config.probability_floor);
    const double t = std::log(static_cast<double>(i + 1) / static_cast<double>(i));
    const double b = std::log(prev / cur);
    num += t * b;
    den += t * t;
    prev = cur;
  }

  const double s_hat = num / den;
  return {s_hat, std::max(s_hat - 1.0, config.epsilon_floor), m};
}

}  // namespace miro
