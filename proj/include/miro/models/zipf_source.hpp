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

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "miro/decoding.hpp"
#include "miro/models/model_source.hpp"
#include "miro/zipf_theory.hpp"

namespace miro {

/// Stationary i.i.d. source: every step draws from the same Zipf law, with
/// token id i-1 at rank i.
class ZipfSource final : public ModelSource {
 public:
  explicit ZipfSource(const ZipfParams& params) : params_(params) {
    const std::size_t n = params.n_vocab();
    const double s = params.effective_s();
    const double h = harmonic_exact(n, s);
    auto dist = std::make_shared<TokenDistribution>();
    dist->n_vocab_full = n;
    dist->token_ids.resize(n);
    dist->probs.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      dist->token_ids[i] = static_cast<TokenId>(i);
      dist->probs[i] = 1.0 / (std::pow(static_cast<double>(i + 1), s) * h);
    }
    dist_ = std::move(dist);
  }

  std::size_t n_vocab() const override { return params_.n_vocab(); }

  std::shared_ptr<const TokenDistribution> next_distribution(
      std::span<const TokenId>) override {
    return dist_;
  }

  bool thread_safe() const override { return true; }

  std::string name() const override {
    char buf[64];
    std::snprintf(buf, sizeof buf, "zipf(s=%g,N=%zu)", params_.s(), params_.n_vocab());
    return buf;
  }

  const ZipfParams& params() const { return params_; }

  /// Entropy of the full distribution in bits.
  double entropy_bits() const {
    double h = 0.0;
    for (auto it = dist_->probs.rbegin(); it != dist_->probs.rend(); ++it)
      h -= *it * std::log2(*it);
    return h;
  }

 private:
  ZipfParams params_;
  std::shared_ptr<const TokenDistribution> dist_;
};

}  // namespace miro
