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

// Seeded experiment runners behind the `toolkit` CLI. Every runner returns
// its CSV as a string; the same config always produces the same bytes.

#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "miro/decoding.hpp"
#include "miro/error.hpp"
#include "miro/generate.hpp"
#include "miro/metrics.hpp"
#include "miro/models/model_source.hpp"
#include "miro/models/ngram_model.hpp"
#include "miro/models/replay.hpp"
#include "miro/models/stdio_client.hpp"
#include "miro/models/zipf_source.hpp"
#include "miro/random.hpp"
#include "miro/version.hpp"
#include "miro/zipf_theory.hpp"

namespace miro {

struct ExperimentConfig {
  std::string model = "zipf";
  /// Policy template; '*' is replaced by each grid value.
  std::string policy = "sample";
  std::vector<std::string> grid;
  std::size_t tokens = 200;
  std::size_t runs = 4;
  std::uint64_t seed = 1;
  std::string out;
  /// Prompt text for n-gram models, encoded with the corpus vocabulary.
  std::string prompt;
  SurpriseKind surprise = SurpriseKind::kModel;
  /// 0 uses the hardware concurrency.
  std::size_t threads = 0;
  std::size_t window = 10;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  for (;;) {
    const auto next = s.find(sep, pos);
    out.push_back(trim(s.substr(pos, next == std::string_view::npos ? s.npos : next - pos)));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

template <class T>
T parse_unsigned(std::string_view text, std::string_view what) {
  T v{};
  const auto* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), last, v);
  if (text.empty() || ec != std::errc() || ptr != last)
    throw ConfigError(std::string(what) + ": expected a nonnegative integer, got '" +
                      std::string(text) + "'");
  return v;
}

inline std::string format_param(double v) { return format_policy_number(v); }

}  // namespace detail

/// Splits a grid list on ';' when present, otherwise on ','.
inline std::vector<std::string> parse_grid(std::string_view text) {
  if (detail::trim(text).empty()) return {};
  auto items = detail::split(text, text.find(';') != std::string_view::npos ? ';' : ',');
  for (const auto& it : items)
    if (it.empty()) throw ConfigError("grid: empty entry in '" + std::string(text) + "'");
  return items;
}

inline SurpriseKind parse_surprise_kind(std::string_view v) {
  if (v == "model") return SurpriseKind::kModel;
  if (v == "sampled") return SurpriseKind::kSampled;
  throw ConfigError("surprise: expected model or sampled, got '" + std::string(v) + "'");
}

inline const char* surprise_kind_name(SurpriseKind k) {
  return k == SurpriseKind::kModel ? "model" : "sampled";
}

/// Applies "key = value" lines onto `cfg`. Blank lines and lines starting
/// with '#' are ignored. Keys: model, policy, grid, tokens, runs, seed, out,
/// prompt, surprise, threads, window.
inline void apply_config_text(ExperimentConfig& cfg, std::string_view text) {
  std::size_t line_no = 0;
  for (const auto& raw : detail::split(text, '\n')) {
    ++line_no;
    if (raw.empty() || raw.front() == '#') continue;
    const auto eq = raw.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(std::string_view(raw).substr(0, eq));
    const std::string value = detail::trim(std::string_view(raw).substr(eq + 1));
    if (key == "model") cfg.model = value;
    else if (key == "policy") cfg.policy = value;
    else if (key == "grid") cfg.grid = parse_grid(value);
    else if (key == "tokens") cfg.tokens = detail::parse_unsigned<std::size_t>(value, key);
    else if (key == "runs") cfg.runs = detail::parse_unsigned<std::size_t>(value, key);
    else if (key == "seed") cfg.seed = detail::parse_unsigned<std::uint64_t>(value, key);
    else if (key == "out") cfg.out = value;
    else if (key == "prompt") cfg.prompt = value;
    else if (key == "surprise") cfg.surprise = parse_surprise_kind(value);
    else if (key == "threads") cfg.threads = detail::parse_unsigned<std::size_t>(value, key);
    else if (key == "window") cfg.window = detail::parse_unsigned<std::size_t>(value, key);
    else throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
}

inline void validate_config(const ExperimentConfig& cfg) {
  if (cfg.model.empty()) throw ConfigError("config: model spec is empty");
  if (cfg.policy.empty()) throw ConfigError("config: policy spec is empty");
  if (cfg.runs < 1) throw ConfigError("config: runs must be >= 1");
  if (cfg.window < 1) throw ConfigError("config: window must be >= 1");
}

/// A model plus the vocabulary needed to read and write text, when it has
/// one.
struct LoadedModel {
  std::unique_ptr<ModelSource> model;
  std::optional<Vocabulary> vocab;
  std::string spec;
};

/// zipf[:s[:N]] | ngram:path[:order] | replay:path | stdio:command
inline LoadedModel load_model(const std::string& spec) {
  LoadedModel out;
  out.spec = spec;
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string rest = colon == std::string::npos ? std::string() : spec.substr(colon + 1);
  if (kind == "zipf") {
    double s = 1.1;
    std::size_t n = 50000;
    if (!rest.empty()) {
      const auto parts = detail::split(rest, ':');
      if (parts.size() > 2) throw ConfigError("model: expected zipf[:s[:N]], got '" + spec + "'");
      s = detail::parse_number(parts[0], "zipf s");
      if (parts.size() == 2) n = detail::parse_unsigned<std::size_t>(parts[1], "zipf N");
    }
    if (!(s > 0.0) || n < 1) throw ConfigError("model: zipf needs s > 0 and N >= 1");
    out.model = std::make_unique<ZipfSource>(ZipfParams(s, n));
  } else if (kind == "ngram") {
    if (rest.empty()) throw ConfigError("model: expected ngram:path[:order]");
    std::string path = rest;
    NGramConfig ncfg;
    const auto last = rest.rfind(':');
    if (last != std::string::npos && last + 1 < rest.size() &&
        rest.find_first_not_of("0123456789", last + 1) == std::string::npos) {
      ncfg.order = detail::parse_unsigned<std::size_t>(std::string_view(rest).substr(last + 1),
                                                       "ngram order");
      path = rest.substr(0, last);
    }
    if (ncfg.order < 1) throw ConfigError("model: ngram order must be >= 1");
    Corpus corpus = load_corpus(path);
    out.model = std::make_unique<NGramModel>(corpus.tokens, ncfg, corpus.vocab.size());
    out.vocab = std::move(corpus.vocab);
  } else if (kind == "replay") {
    if (rest.empty()) throw ConfigError("model: expected replay:path");
    try {
      out.model = std::make_unique<ReplaySource>(read_replay(rest));
    } catch (const FormatError& e) {
      throw ModelIoError(e.what());
    }
  } else if (kind == "stdio") {
    if (rest.empty()) throw ConfigError("model: expected stdio:command");
    out.model = std::make_unique<StdioModelClient>(rest);
  } else {
    throw ConfigError("model: unknown kind '" + kind + "' (zipf, ngram, replay, stdio)");
  }
  return out;
}

/// Prompt tokens for `cfg.prompt`; replay models always replay from the start.
inline std::vector<TokenId> prompt_tokens(const LoadedModel& m, const std::string& prompt) {
  if (prompt.empty()) return {};
  if (!m.vocab) throw ConfigError("prompt: model '" + m.spec + "' has no text vocabulary");
  return m.vocab->encode(tokenize_text(prompt));
}

/// Policy string for one grid value.
inline std::string instantiate_policy(const std::string& tmpl, const std::string& value) {
  const auto star = tmpl.find('*');
  if (star == std::string::npos) {
    if (!value.empty()) throw ConfigError("policy '" + tmpl + "' has no '*' for the grid value");
    return tmpl;
  }
  if (tmpl.find('*', star + 1) != std::string::npos)
    throw ConfigError("policy '" + tmpl + "' has more than one '*'");
  if (value.empty()) throw ConfigError("policy '" + tmpl + "' needs a grid");
  return tmpl.substr(0, star) + value + tmpl.substr(star + 1);
}

struct Cell {
  std::size_t param_index = 0;
  std::size_t run = 0;
  std::string param;
  std::string policy;
  GenerationRecord record;
};

/// Runs every (grid value, run) cell. Cells run concurrently when the model
/// allows it; results are ordered by (param_index, run).
inline std::vector<Cell> run_cells(const ExperimentConfig& cfg, LoadedModel& m) {
  validate_config(cfg);
  std::vector<std::string> grid = cfg.grid;
  const bool has_star = cfg.policy.find('*') != std::string::npos;
  if (grid.empty() && has_star) throw ConfigError("policy '" + cfg.policy + "' needs a grid");
  if (!grid.empty() && !has_star)
    throw ConfigError("a grid needs a '*' in the policy, e.g. top_k:*");
  if (grid.empty()) grid.push_back("");

  std::vector<Cell> cells;
  std::vector<Policy> policies;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const std::string pstr = instantiate_policy(cfg.policy, grid[g]);
    policies.push_back(parse_policy(pstr));
    for (std::size_t r = 0; r < cfg.runs; ++r) {
      Cell c;
      c.param_index = g;
      c.run = r;
      c.param = grid[g].empty() ? pstr : grid[g];
      c.policy = pstr;
      cells.push_back(std::move(c));
    }
  }
  const auto context = prompt_tokens(m, cfg.prompt);

  auto work = [&](Cell& c) {
    c.record = generate(*m.model, policies[c.param_index], cfg.tokens,
                        derive_seed(cfg.seed, c.param_index, c.run), context);
  };

  std::size_t threads = cfg.threads ? cfg.threads : std::thread::hardware_concurrency();
  if (!m.model->thread_safe()) threads = 1;
  threads = std::max<std::size_t>(1, std::min(threads, cells.size()));
  if (threads == 1) {
    for (auto& c : cells) work(c);
    return cells;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= cells.size()) return;
        try {
          work(cells[i]);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mu);
          if (!failure) failure = std::current_exception();
          next.store(cells.size());
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return cells;
}

/// "# key=value" lines identifying the run.
inline std::string csv_header(std::string_view command, const ExperimentConfig& cfg,
                              const std::string& model_name) {
  std::ostringstream h;
  h << "# toolkit " << kVersion << ' ' << command << '\n';
  h << "# model=" << cfg.model << " (" << model_name << ")\n";
  h << "# policy=" << cfg.policy << '\n';
  if (!cfg.grid.empty()) {
    h << "# grid=";
    for (std::size_t i = 0; i < cfg.grid.size(); ++i) h << (i ? ";" : "") << cfg.grid[i];
    h << '\n';
  }
  h << "# tokens=" << cfg.tokens << " runs=" << cfg.runs << " seed=" << cfg.seed
    << " surprise=" << surprise_kind_name(cfg.surprise) << '\n';
  if (!cfg.prompt.empty()) h << "# prompt=" << cfg.prompt << '\n';
  return h.str();
}

inline std::string sweep_csv(const ExperimentConfig& cfg, const std::string& model_name,
                             const std::vector<Cell>& cells) {
  std::ostringstream out;
  out << csv_header("sweep", cfg, model_name);
  out << "param,run,surprise_rate_bits,perplexity\n";
  for (const auto& c : cells) {
    const double rate = surprise_rate(c.record, std::nullopt, cfg.surprise);
    out << c.param << ',' << c.run << ',' << format_double(rate) << ','
        << format_double(perplexity(rate)) << '\n';
  }
  return out.str();
}

inline std::string run_sweep(const ExperimentConfig& cfg, LoadedModel& m) {
  return sweep_csv(cfg, m.model->name(), run_cells(cfg, m));
}

inline constexpr std::size_t kRepetitionOrders[] = {1, 2, 4, 6};

inline std::string repetition_csv(const ExperimentConfig& cfg, const std::string& model_name,
                                  const std::vector<Cell>& cells) {
  std::ostringstream out;
  out << csv_header("repetition", cfg, model_name);
  out << "param,run,surprise_rate_bits,n,percent_repetition\n";
  for (const auto& c : cells) {
    const double rate = surprise_rate(c.record, std::nullopt, cfg.surprise);
    const auto gen = c.record.generated_tokens();
    for (std::size_t n : kRepetitionOrders) {
      if (gen.size() < n) continue;
      const auto rep = ngram_repetition(gen, n);
      out << c.param << ',' << c.run << ',' << format_double(rate) << ',' << n << ','
          << format_double(rep.percent) << '\n';
    }
  }
  return out.str();
}

inline std::string run_repetition(const ExperimentConfig& cfg, LoadedModel& m) {
  return repetition_csv(cfg, m.model->name(), run_cells(cfg, m));
}

/// Mean over runs of the trailing-window surprise at each generated step.
inline std::vector<double> trap_trace(const ExperimentConfig& cfg, const std::vector<Cell>& cells) {
  std::vector<double> sum;
  std::vector<std::size_t> count;
  for (const auto& c : cells) {
    const auto w = trailing_window_means(generated_surprises(c.record, cfg.surprise), cfg.window);
    if (w.size() > sum.size()) {
      sum.resize(w.size(), 0.0);
      count.resize(w.size(), 0);
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      sum[i] += w[i];
      ++count[i];
    }
  }
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] /= static_cast<double>(count[i]);
  return sum;
}

inline std::string run_trap_trace(const ExperimentConfig& cfg, LoadedModel& m) {
  if (!cfg.grid.empty()) throw ConfigError("trap: takes a single policy, not a grid");
  const auto cells = run_cells(cfg, m);
  const auto trace = trap_trace(cfg, cells);
  std::ostringstream out;
  out << csv_header("trap", cfg, m.model->name());
  out << "# window=" << cfg.window << '\n';
  out << "step,mean_window_surprise_bits\n";
  for (std::size_t i = 0; i < trace.size(); ++i)
    out << i + 1 << ',' << format_double(trace[i]) << '\n';
  return out.str();
}

struct TheoryConfig {
  ZipfParams params{1.1, 50000};
  std::vector<std::uint64_t> k_grid = {1,   2,   3,    5,    10,   20,   50,   100,
                                       200, 500, 1000, 2000, 5000, 10000};
  std::vector<double> p_grid = {0.1,  0.15, 0.2,  0.25, 0.3,  0.35, 0.4,  0.45, 0.5,
                                0.55, 0.6,  0.65, 0.7,  0.75, 0.8,  0.85, 0.9};
};

/// Rows (family, x, exact_bits, approx_bits). family "k": exact top-k sum and
/// its closed form (blank at k = 1); family "p": exact top-p truncation and
/// its closed form.
inline std::string run_theory(const TheoryConfig& tc) {
  std::ostringstream out;
  out << "# toolkit " << kVersion << " theory\n";
  out << "# s=" << detail::format_param(tc.params.s()) << " N=" << tc.params.n_vocab()
      << " temperature=" << detail::format_param(tc.params.temperature()) << '\n';
  out << "family,x,exact_bits,approx_bits\n";
  const ApproxConstants consts = ApproxConstants::from(tc.params);
  for (std::uint64_t k : tc.k_grid) {
    if (k > tc.params.n_vocab()) continue;
    out << "k," << k << ',' << format_double(topk_cross_entropy_exact(k, tc.params)) << ',';
    if (k >= 2) out << format_double(topk_cross_entropy_approx(k, tc.params, consts));
    out << '\n';
  }
  for (double p : tc.p_grid)
    out << "p," << detail::format_param(p) << ','
        << format_double(topp_cross_entropy_exact(p, tc.params)) << ','
        << format_double(topp_cross_entropy_approx(p, tc.params, consts)) << '\n';
  return out.str();
}

}  // namespace miro
