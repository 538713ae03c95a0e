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

#include <charconv>
#include <cstdio>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "miro/decoding.hpp"
#include "miro/error.hpp"
#include "miro/metrics.hpp"
#include "miro/mirostat.hpp"
#include "miro/models/model_source.hpp"
#include "miro/random.hpp"

namespace miro {

namespace detail {

inline std::string format_policy_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace detail

/// A decoding policy: optional logit processing (repetition penalty, then
/// temperature) followed by either fixed truncation (top-k, then top-p) or
/// a feedback controller. An empty policy is plain ancestral sampling.
struct Policy {
  std::optional<double> temperature;
  std::optional<double> penalty;
  PenaltyMode penalty_mode = PenaltyMode::kSymmetric;
  std::optional<std::size_t> top_k;
  std::optional<double> top_p;
  std::optional<MirostatState> controller;

  bool processes_logits() const { return temperature.has_value() || penalty.has_value(); }

  /// Canonical text form, parseable by parse_policy.
  std::string describe() const {
    std::vector<std::string> parts;
    if (penalty) {
      parts.push_back("penalty:" + detail::format_policy_number(*penalty));
      if (penalty_mode == PenaltyMode::kNegativeOnly) parts.push_back("penalty_mode:negative_only");
    }
    if (temperature) parts.push_back("temp:" + detail::format_policy_number(*temperature));
    if (top_k) parts.push_back("top_k:" + std::to_string(*top_k));
    if (top_p) parts.push_back("top_p:" + detail::format_policy_number(*top_p));
    if (controller) {
      parts.push_back(std::string(variant_name(controller->variant)) + ":" +
                      detail::format_policy_number(controller->tau));
      if (controller->eta != 1.0) parts.push_back("eta:" + detail::format_policy_number(controller->eta));
      if (controller->m != 100) parts.push_back("m:" + std::to_string(controller->m));
      if (controller->error_source == ErrorSource::kModel) parts.push_back("error:model");
    }
    if (parts.empty()) return "sample";
    std::string out;
    for (const auto& p : parts) out += (out.empty() ? "" : ",") + p;
    return out;
  }
};

namespace detail {

inline double parse_number(std::string_view text, std::string_view what) {
  double v = 0.0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || text.empty())
    throw ConfigError("policy: bad number '" + std::string(text) + "' for " + std::string(what));
  return v;
}

inline std::size_t parse_count(std::string_view text, std::string_view what) {
  std::size_t v = 0;
  const auto* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), last, v);
  if (ec != std::errc() || ptr != last || text.empty())
    throw ConfigError("policy: bad integer '" + std::string(text) + "' for " + std::string(what));
  return v;
}

}  // namespace detail

/// Parses "component[,component...]" where a component is one of
/// top_k:K, top_p:P, temp:T, penalty:THETA, penalty_mode:negative_only|symmetric,
/// miro:TAU, miro2:TAU, miroavg:TAU, eta:ETA, m:M, error:sampled|model, sample.
inline Policy parse_policy(std::string_view text) {
  Policy p;
  std::optional<double> eta;
  std::optional<std::size_t> m;
  std::optional<ErrorSource> error_source;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find(',', pos), text.size());
    const std::string_view part = text.substr(pos, end - pos);
    pos = end + 1;
    if (part.empty()) throw ConfigError("policy: empty component in '" + std::string(text) + "'");
    if (part == "sample") continue;
    const auto colon = part.find(':');
    if (colon == std::string_view::npos)
      throw ConfigError("policy: component '" + std::string(part) + "' needs a value");
    const std::string_view name = part.substr(0, colon);
    const std::string_view value = part.substr(colon + 1);
    auto controller = [&](MirostatVariant v) {
      if (p.controller) throw ConfigError("policy: more than one controller");
      const double tau = detail::parse_number(value, name);
      if (!(tau > 0.0)) throw ConfigError("policy: tau must be > 0");
      p.controller = MirostatState::make(v, tau);
    };
    if (name == "top_k") {
      p.top_k = detail::parse_count(value, name);
      if (*p.top_k < 1) throw ConfigError("policy: top_k must be >= 1");
    } else if (name == "top_p") {
      p.top_p = detail::parse_number(value, name);
      if (!(*p.top_p > 0.0 && *p.top_p <= 1.0)) throw ConfigError("policy: top_p must lie in (0, 1]");
    } else if (name == "temp") {
      p.temperature = detail::parse_number(value, name);
      if (!(*p.temperature > 0.0)) throw ConfigError("policy: temperature must be > 0");
    } else if (name == "penalty") {
      p.penalty = detail::parse_number(value, name);
      if (!(*p.penalty >= 1.0)) throw ConfigError("policy: penalty must be >= 1");
    } else if (name == "penalty_mode") {
      if (value == "negative_only") p.penalty_mode = PenaltyMode::kNegativeOnly;
      else if (value == "symmetric") p.penalty_mode = PenaltyMode::kSymmetric;
      else throw ConfigError("policy: unknown penalty_mode '" + std::string(value) + "'");
    } else if (name == "miro") {
      controller(MirostatVariant::kV1);
    } else if (name == "miro2") {
      controller(MirostatVariant::kV2);
    } else if (name == "miroavg") {
      controller(MirostatVariant::kAverage);
    } else if (name == "eta") {
      eta = detail::parse_number(value, name);
      if (!(*eta > 0.0)) throw ConfigError("policy: eta must be > 0");
    } else if (name == "m") {
      m = detail::parse_count(value, name);
      if (*m < 2) throw ConfigError("policy: m must be >= 2");
    } else if (name == "error") {
      if (value == "sampled") error_source = ErrorSource::kSampled;
      else if (value == "model") error_source = ErrorSource::kModel;
      else throw ConfigError("policy: unknown error source '" + std::string(value) + "'");
    } else {
      throw ConfigError("policy: unknown component '" + std::string(name) + "'");
    }
    if (end == text.size()) break;
  }
  if (p.controller && (p.top_k || p.top_p))
    throw ConfigError("policy: a controller cannot be combined with top_k/top_p");
  if ((eta || m || error_source) && !p.controller)
    throw ConfigError("policy: eta/m/error need a controller (miro, miro2, miroavg)");
  if (p.controller) {
    if (eta) p.controller->eta = *eta;
    if (m) p.controller->m = *m;
    if (error_source) p.controller->error_source = *error_source;
  }
  return p;
}

namespace detail {

inline std::shared_ptr<const TokenDistribution> fetch(ModelSource& model,
                                                      std::span<const TokenId> prefix,
                                                      std::size_t step) {
  try {
    return model.next_distribution(prefix);
  } catch (const ModelIoError& e) {
    if (e.step() >= 0) throw;
    throw ModelIoError(e.what(), static_cast<long>(step));
  } catch (const Error& e) {
    throw ModelIoError(e.what(), static_cast<long>(step));
  }
}

}  // namespace detail

/// Scores `tokens` under `model` by teacher forcing: entry i is the surprise
/// of tokens[i] given tokens[0..i). Both surprise sequences are the model
/// surprise.
inline GenerationRecord score_sequence(ModelSource& model, std::span<const TokenId> tokens,
                                       std::size_t context_len = 0) {
  if (context_len > tokens.size()) throw DomainError("score_sequence: context longer than tokens");
  GenerationRecord rec;
  rec.context_len = context_len;
  rec.tokens.assign(tokens.begin(), tokens.end());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto dist = detail::fetch(model, tokens.first(i), i);
    if (!dist) throw ModelIoError("model ended before the sequence did", static_cast<long>(i));
    const double p = dist->prob_of(tokens[i]);
    if (!(p > 0.0))
      throw ModelIoError("token " + std::to_string(tokens[i]) + " has zero probability",
                         static_cast<long>(i));
    rec.surprises_bits.push_back(surprise_bits_of(p));
  }
  rec.sampled_surprises_bits = rec.surprises_bits;
  return rec;
}

/// Runs the decoding loop for up to `max_tokens` steps after `context`, or
/// until the model reports end of stream. Same model, policy and seed give a
/// bit-identical record.
inline GenerationRecord generate(ModelSource& model, const Policy& policy,
                                 std::size_t max_tokens, std::uint64_t seed,
                                 std::span<const TokenId> context = {}) {
  GenerationRecord rec = score_sequence(model, context, context.size());
  Rng rng(seed);
  std::optional<MirostatState> state = policy.controller;
  rec.tokens.reserve(context.size() + max_tokens);

  for (std::size_t step = 0; step < max_tokens; ++step) {
    const std::size_t pos = rec.tokens.size();
    const auto model_dist = detail::fetch(model, rec.tokens, pos);
    if (!model_dist) break;

    TokenDistribution processed;
    const TokenDistribution* work = model_dist.get();
    if (policy.processes_logits()) {
      LogitVector logits = to_logits(*model_dist);
      if (policy.penalty)
        logits = repetition_penalty(std::move(logits), rec.tokens, *policy.penalty,
                                    policy.penalty_mode);
      processed = softmax_to_distribution(logits, policy.temperature.value_or(1.0));
      work = &processed;
    }

    SampleOutcome outcome;
    if (state) {
      StepResult r = controller_step(*work, *state, rng);
      outcome = r.outcome;
      *state = r.state;
      rec.controller_traces.push_back(r.trace);
    } else {
      TokenDistribution filtered;
      const TokenDistribution* from = work;
      if (policy.top_k) {
        filtered = top_k_filter(*from, *policy.top_k);
        from = &filtered;
      }
      if (policy.top_p) {
        filtered = top_p_filter(*from, *policy.top_p);
        from = &filtered;
      }
      outcome = sample(*from, rng, work);
    }
    if (work != model_dist.get()) {
      const double p = model_dist->prob_of(outcome.token_id);
      if (!(p > 0.0))
        throw ModelIoError("sampled token missing from model distribution",
                           static_cast<long>(pos));
      outcome.surprise_model_bits = surprise_bits_of(p);
    }
    rec.tokens.push_back(outcome.token_id);
    rec.surprises_bits.push_back(outcome.surprise_model_bits);
    rec.sampled_surprises_bits.push_back(outcome.surprise_bits);
  }
  return rec;
}

}  // namespace miro
