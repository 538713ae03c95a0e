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
#include <cstdio>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "miro/decoding.hpp"
#include "miro/error.hpp"
#include "miro/mirostat.hpp"

namespace miro {

/// Tokens of one run plus per-token surprise. The first `context_len`
/// entries are the prompt; every metric skips them.
struct GenerationRecord {
  std::vector<TokenId> tokens;
  /// -log2 P_M(token | prefix) under the untruncated model.
  std::vector<double> surprises_bits;
  /// -log2 of the token's probability in the distribution it was drawn from
  /// (equal to the model surprise for context tokens).
  std::vector<double> sampled_surprises_bits;
  /// One entry per generated token when a feedback controller was used.
  std::vector<StepTrace> controller_traces;
  std::size_t context_len = 0;

  std::size_t generated_count() const { return tokens.size() - context_len; }
  std::span<const TokenId> generated_tokens() const {
    return std::span<const TokenId>(tokens).subspan(context_len);
  }
};

enum class SurpriseKind {
  kModel,    // GenerationRecord::surprises_bits
  kSampled,  // GenerationRecord::sampled_surprises_bits
};

inline std::span<const double> generated_surprises(const GenerationRecord& rec,
                                                   SurpriseKind kind = SurpriseKind::kModel) {
  const auto& v = kind == SurpriseKind::kModel ? rec.surprises_bits : rec.sampled_surprises_bits;
  return std::span<const double>(v).subspan(rec.context_len);
}

/// Mean surprise over generated positions [start, end) (relative to the end
/// of the context). Defaults to every generated token.
inline double surprise_rate(const GenerationRecord& rec,
                            std::optional<std::pair<std::size_t, std::size_t>> window = std::nullopt,
                            SurpriseKind kind = SurpriseKind::kModel) {
  const auto s = generated_surprises(rec, kind);
  std::size_t start = 0;
  std::size_t end = s.size();
  if (window) std::tie(start, end) = *window;
  if (start >= end || end > s.size())
    throw DomainError("surprise_rate: empty or out-of-range window");
  double sum = 0.0;
  for (std::size_t i = start; i < end; ++i) sum += s[i];
  return sum / static_cast<double>(end - start);
}

inline double perplexity(double rate_bits) { return std::exp2(rate_bits); }

/// Trailing-window means: entry i averages surprises (i-width, i], using
/// fewer values for the first width-1 entries.
inline std::vector<double> trailing_window_means(std::span<const double> surprises,
                                                 std::size_t width = 10) {
  if (width < 1) throw DomainError("trailing_window_means: width must be >= 1");
  std::vector<double> out;
  out.reserve(surprises.size());
  for (std::size_t i = 0; i < surprises.size(); ++i) {
    const std::size_t n = std::min(width, i + 1);
    double sum = 0.0;
    for (std::size_t j = i + 1 - n; j <= i; ++j) sum += surprises[j];
    out.push_back(sum / static_cast<double>(n));
  }
  return out;
}

struct RepetitionReport {
  std::size_t n = 0;
  double percent = 0.0;
  std::size_t distinct_count = 0;
  std::size_t total_count = 0;
};

/// Percentage of repeated contiguous n-grams: (1 - distinct/total) * 100.
inline RepetitionReport ngram_repetition(std::span<const TokenId> tokens, std::size_t n) {
  if (n < 1) throw DomainError("ngram_repetition: n must be >= 1");
  if (tokens.size() < n) throw DomainError("ngram_repetition: sequence shorter than n");
  std::set<std::vector<TokenId>> grams;
  const std::size_t total = tokens.size() - n + 1;
  for (std::size_t i = 0; i < total; ++i)
    grams.emplace(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                  tokens.begin() + static_cast<std::ptrdiff_t>(i + n));
  RepetitionReport r;
  r.n = n;
  r.total_count = total;
  r.distinct_count = grams.size();
  r.percent = (1.0 - static_cast<double>(r.distinct_count) / static_cast<double>(total)) * 100.0;
  return r;
}

inline std::string format_double(double v, int precision = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

/// CSV rows (step, surprise_bits, window_mean_bits) for the generated part.
inline void write_surprise_csv(std::ostream& out, const GenerationRecord& rec,
                               SurpriseKind kind = SurpriseKind::kModel, std::size_t width = 10) {
  const auto s = generated_surprises(rec, kind);
  const auto w = trailing_window_means(s, width);
  out << "step,surprise_bits,window_mean_bits\n";
  for (std::size_t i = 0; i < s.size(); ++i)
    out << i + 1 << ',' << format_double(s[i]) << ',' << format_double(w[i]) << '\n';
}

/// CSV rows (n, percent).
inline void write_repetition_csv(std::ostream& out, std::span<const RepetitionReport> reports) {
  out << "n,percent\n";
  for (const auto& r : reports) out << r.n << ',' << format_double(r.percent) << '\n';
}

}  // namespace miro
