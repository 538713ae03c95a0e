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

// toolkit: command line front end for the miro experiments.
//
// Exit codes: 0 success, 2 configuration error, 3 model or file I/O error,
// 1 anything else.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "miro/miro.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitModelIo = 3;

struct Flags {
  std::string model;
  std::string policy;
  std::string grid;
  std::size_t tokens = 0;
  std::size_t runs = 0;
  std::uint64_t seed = 0;
  std::string out;
  std::string config;
  std::string prompt;
  std::string surprise;
  std::size_t threads = 0;
  std::size_t window = 0;
};

struct Opts {
  CLI::Option* model = nullptr;
  CLI::Option* policy = nullptr;
  CLI::Option* grid = nullptr;
  CLI::Option* tokens = nullptr;
  CLI::Option* runs = nullptr;
  CLI::Option* seed = nullptr;
  CLI::Option* out = nullptr;
  CLI::Option* config = nullptr;
  CLI::Option* prompt = nullptr;
  CLI::Option* surprise = nullptr;
  CLI::Option* threads = nullptr;
  CLI::Option* window = nullptr;
};

Opts add_common(CLI::App* app, Flags& f) {
  Opts o;
  o.model = app->add_option("--model", f.model, "zipf[:s[:N]] | ngram:path[:order] | replay:path | stdio:cmd");
  o.policy = app->add_option("--policy", f.policy, "e.g. top_k:*, top_p:0.9, miro:3, temp:0.8,penalty:1.2");
  o.grid = app->add_option("--grid", f.grid, "values substituted for '*' (',' or ';' separated)");
  o.tokens = app->add_option("--tokens", f.tokens, "tokens generated per run");
  o.runs = app->add_option("--runs", f.runs, "runs per grid value");
  o.seed = app->add_option("--seed", f.seed, "base seed");
  o.out = app->add_option("--out", f.out, "output path (default stdout)");
  o.config = app->add_option("--config", f.config, "key = value config file");
  o.prompt = app->add_option("--prompt", f.prompt, "prompt text (n-gram models)");
  o.surprise = app->add_option("--surprise", f.surprise, "model | sampled");
  o.threads = app->add_option("--threads", f.threads, "worker threads (0 = all cores)");
  o.window = app->add_option("--window", f.window, "trailing window width");
  return o;
}

miro::ExperimentConfig build_config(const Flags& f, const Opts& o, std::size_t default_tokens,
                                    std::size_t default_runs) {
  miro::ExperimentConfig cfg;
  cfg.tokens = default_tokens;
  cfg.runs = default_runs;
  if (o.config->count()) {
    try {
      miro::apply_config_text(cfg, miro::detail::read_file(f.config));
    } catch (const miro::ModelIoError&) {
      throw miro::ConfigError("cannot read config file " + f.config);
    }
  }
  if (o.model->count()) cfg.model = f.model;
  if (o.policy->count()) cfg.policy = f.policy;
  if (o.grid->count()) cfg.grid = miro::parse_grid(f.grid);
  if (o.tokens->count()) cfg.tokens = f.tokens;
  if (o.runs->count()) cfg.runs = f.runs;
  if (o.seed->count()) cfg.seed = f.seed;
  if (o.out->count()) cfg.out = f.out;
  if (o.prompt->count()) cfg.prompt = f.prompt;
  if (o.surprise->count()) cfg.surprise = miro::parse_surprise_kind(f.surprise);
  if (o.threads->count()) cfg.threads = f.threads;
  if (o.window->count()) cfg.window = f.window;
  miro::validate_config(cfg);
  return cfg;
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw miro::ModelIoError("cannot write " + path);
  out << text;
  if (!out) throw miro::ModelIoError("short write to " + path);
}

std::vector<miro::TokenId> read_token_file(const std::string& path) {
  std::istringstream in(miro::detail::read_file(path));
  std::vector<miro::TokenId> tokens;
  std::string word;
  while (in >> word) {
    try {
      std::size_t used = 0;
      const unsigned long v = std::stoul(word, &used);
      if (used != word.size() || v > 0xFFFFFFFFUL) throw std::invalid_argument(word);
      tokens.push_back(static_cast<miro::TokenId>(v));
    } catch (const std::logic_error&) {
      throw miro::ConfigError("token file " + path + ": '" + word + "' is not a token id");
    }
  }
  return tokens;
}

std::string format_tokens(const std::vector<miro::TokenId>& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    s += std::to_string(tokens[i]);
    s += (i + 1 == tokens.size() || (i + 1) % 20 == 0) ? '\n' : ' ';
  }
  return s;
}

int run_theory(const Flags& f, const Opts& o, const std::string& family, double temperature) {
  miro::ExperimentConfig cfg = build_config(f, o, 0, 1);
  const std::string spec = cfg.model;
  if (spec.rfind("zipf", 0) != 0) throw miro::ConfigError("theory: needs a zipf[:s[:N]] model");
  auto loaded = miro::load_model(spec);
  const auto& zipf = static_cast<const miro::ZipfSource&>(*loaded.model);
  miro::TheoryConfig tc;
  tc.params = miro::ZipfParams(zipf.params().s(), zipf.params().n_vocab(), temperature);
  if (family == "p") tc.k_grid.clear();
  if (family == "k") tc.p_grid.clear();
  if (!cfg.grid.empty()) {
    if (family == "both") throw miro::ConfigError("theory: --grid needs --family k or p");
    if (family == "k") {
      tc.k_grid.clear();
      for (const auto& g : cfg.grid) tc.k_grid.push_back(miro::detail::parse_unsigned<std::uint64_t>(g, "k"));
    } else {
      tc.p_grid.clear();
      for (const auto& g : cfg.grid) tc.p_grid.push_back(miro::detail::parse_number(g, "p"));
    }
  }
  emit(cfg.out, miro::run_theory(tc));
  return 0;
}

int run_estimate(const Flags& f, const Opts& o, const std::string& probs_path, std::size_t step,
                 std::size_t m) {
  miro::ExperimentConfig cfg = build_config(f, o, 0, 1);
  std::vector<double> probs;
  std::string source;
  if (!probs_path.empty()) {
    std::istringstream in(miro::detail::read_file(probs_path));
    double v;
    while (in >> v) probs.push_back(v);
    if (!in.eof()) throw miro::ConfigError("probability file " + probs_path + " has a non-number");
    std::sort(probs.begin(), probs.end(), std::greater<>());
    source = probs_path;
  } else {
    auto loaded = miro::load_model(cfg.model);
    std::vector<miro::TokenId> prefix;
    if (auto* replay = dynamic_cast<miro::ReplaySource*>(loaded.model.get())) {
      if (step >= replay->recorded_tokens().size())
        throw miro::ConfigError("estimate: step beyond the recorded tokens");
      prefix.assign(replay->recorded_tokens().begin(),
                    replay->recorded_tokens().begin() + static_cast<std::ptrdiff_t>(step));
    } else {
      prefix = miro::prompt_tokens(loaded, cfg.prompt);
    }
    const auto dist = loaded.model->next_distribution(prefix);
    if (!dist) throw miro::ModelIoError("estimate: model returned no distribution");
    probs = dist->probs;
    source = loaded.model->name();
  }
  miro::EstimatorConfig ec;
  ec.m = m;
  const auto est = miro::estimate_zipf_exponent(probs, ec);
  std::ostringstream out;
  out << "# toolkit " << miro::kVersion << " estimate\n# source=" << source << " step=" << step << '\n';
  out << "s_hat,epsilon_hat,m_used\n"
      << miro::format_double(est.s_hat, 9) << ',' << miro::format_double(est.epsilon_hat, 9) << ','
      << est.m_used << '\n';
  emit(cfg.out, out.str());
  return 0;
}

int run_compress(const Flags& f, const Opts& o, const std::string& input,
                 const std::string& decode_path, bool verify) {
  miro::ExperimentConfig cfg = build_config(f, o, 1000, 1);
  auto loaded = miro::load_model(cfg.model);
  auto& model = *loaded.model;

  if (!decode_path.empty()) {
    const auto stream = miro::read_code_file(decode_path);
    const auto tokens = miro::decode(stream, model, stream.n_tokens);
    emit(cfg.out, format_tokens(tokens));
    return 0;
  }

  std::vector<miro::TokenId> tokens;
  std::string origin;
  if (!input.empty()) {
    tokens = read_token_file(input);
    origin = "file " + input;
  } else if (auto* replay = dynamic_cast<miro::ReplaySource*>(&model)) {
    tokens = replay->recorded_tokens();
    origin = "replay";
  } else {
    const auto rec = miro::generate(model, miro::parse_policy(cfg.policy), cfg.tokens, cfg.seed,
                                    miro::prompt_tokens(loaded, cfg.prompt));
    tokens = rec.tokens;
    origin = "generated policy=" + cfg.policy + " seed=" + std::to_string(cfg.seed);
  }
  if (tokens.empty()) throw miro::ConfigError("compress: no tokens to encode");

  const auto rec = miro::score_sequence(model, tokens);
  const auto stream = miro::encode(tokens, model);
  const double rate = miro::surprise_rate(rec);
  if (!cfg.out.empty()) miro::write_code_file(cfg.out, stream);
  std::printf("tokens=%zu source=%s\n", tokens.size(), origin.c_str());
  std::printf("bits=%llu bits_per_token=%.6f\n", static_cast<unsigned long long>(stream.bit_count),
              stream.bits_per_token());
  std::printf("surprise_rate_bits=%.6f gap_bits=%.6f\n", rate, stream.bits_per_token() - rate);
  std::printf("percent_compression=%.4f (raw = tokens * ceil(log2 %u) bits)\n",
              miro::percent_compression(stream), stream.n_vocab);
  if (verify) {
    const auto check = cfg.out.empty() ? stream : miro::read_code_file(cfg.out);
    const auto back = miro::decode(check, model, tokens.size());
    if (back != tokens) {
      std::fprintf(stderr, "verify: decoded tokens differ from the input\n");
      return 1;
    }
    std::printf("verify=ok\n");
  }
  return 0;
}

int run_generate(const Flags& f, const Opts& o, const std::string& replay_out, bool text) {
  miro::ExperimentConfig cfg = build_config(f, o, 200, 1);
  auto loaded = miro::load_model(cfg.model);
  const auto policy = miro::parse_policy(cfg.policy);
  const auto rec = miro::generate(*loaded.model, policy, cfg.tokens, cfg.seed,
                                  miro::prompt_tokens(loaded, cfg.prompt));
  std::ostringstream out;
  out << miro::csv_header("generate", cfg, loaded.model->name());
  out << "step,token,surprise_bits,sampled_surprise_bits,window_mean_bits,mu\n";
  const auto model_s = miro::generated_surprises(rec, miro::SurpriseKind::kModel);
  const auto sampled_s = miro::generated_surprises(rec, miro::SurpriseKind::kSampled);
  const auto window = miro::trailing_window_means(miro::generated_surprises(rec, cfg.surprise), cfg.window);
  const auto gen = rec.generated_tokens();
  for (std::size_t i = 0; i < gen.size(); ++i) {
    out << i + 1 << ',' << gen[i] << ',' << miro::format_double(model_s[i]) << ','
        << miro::format_double(sampled_s[i]) << ',' << miro::format_double(window[i]) << ',';
    if (!rec.controller_traces.empty()) out << miro::format_double(rec.controller_traces[i].mu_after);
    out << '\n';
  }
  out << "# surprise_rate_bits=" << miro::format_double(miro::surprise_rate(rec, std::nullopt, cfg.surprise))
      << '\n';
  emit(cfg.out, out.str());
  if (text) {
    if (!loaded.vocab) throw miro::ConfigError("generate: --text needs a model with a vocabulary");
    std::fprintf(stderr, "%s\n", loaded.vocab->decode(rec.tokens).c_str());
  }
  if (!replay_out.empty()) {
    miro::ReplayData data;
    data.n_vocab = static_cast<std::uint32_t>(loaded.model->n_vocab());
    data.tokens = rec.tokens;
    data.rows.assign(rec.tokens.size() * data.n_vocab, 0.0f);
    for (std::size_t i = 0; i < rec.tokens.size(); ++i) {
      const auto dist = loaded.model->next_distribution(std::span(rec.tokens).first(i));
      for (std::size_t j = 0; j < dist->size(); ++j)
        data.rows[i * data.n_vocab + dist->token_ids[j]] = static_cast<float>(dist->probs[j]);
    }
    miro::write_replay(replay_out, data);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"miro decoding toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", miro::kVersion);

  Flags f;
  auto* theory = app.add_subcommand("theory", "exact and closed-form truncated cross-entropy curves");
  auto* sweep = app.add_subcommand("sweep", "surprise rate over a policy parameter grid");
  auto* repetition = app.add_subcommand("repetition", "n-gram repetition vs surprise rate");
  auto* trap = app.add_subcommand("trap", "windowed surprise along long generations");
  auto* estimate = app.add_subcommand("estimate", "fit a Zipf exponent to a distribution");
  auto* compress = app.add_subcommand("compress", "arithmetic-code a token sequence");
  auto* gen = app.add_subcommand("generate", "generate one sequence with per-token metrics");

  const Opts o_theory = add_common(theory, f);
  const Opts o_sweep = add_common(sweep, f);
  const Opts o_rep = add_common(repetition, f);
  const Opts o_trap = add_common(trap, f);
  const Opts o_est = add_common(estimate, f);
  const Opts o_comp = add_common(compress, f);
  const Opts o_gen = add_common(gen, f);

  std::string family = "both";
  double temperature = 1.0;
  theory->add_option("--family", family, "k, p or both")->check(CLI::IsMember({"k", "p", "both"}));
  theory->add_option("--temperature", temperature, "sampling temperature (s becomes s/T)");

  std::string probs_path;
  std::size_t step = 0;
  std::size_t m = 100;
  estimate->add_option("--probs", probs_path, "file of probabilities (whitespace separated)");
  estimate->add_option("--step", step, "replay step whose distribution is fitted");
  estimate->add_option("-m", m, "number of ranks used by the fit");

  std::string input, decode_path;
  bool verify = false;
  compress->add_option("--input", input, "file of whitespace separated token ids");
  compress->add_option("--decode", decode_path, "decode this .mirc file instead of encoding");
  compress->add_flag("--verify", verify, "decode the result and compare");

  std::string replay_out;
  bool text = false;
  gen->add_option("--export-replay", replay_out, "also write the conditionals as a replay file");
  gen->add_flag("--text", text, "print the decoded text to stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*theory) return run_theory(f, o_theory, family, temperature);
    if (*sweep) {
      auto cfg = build_config(f, o_sweep, 200, 4);
      auto m_loaded = miro::load_model(cfg.model);
      emit(cfg.out, miro::run_sweep(cfg, m_loaded));
    } else if (*repetition) {
      auto cfg = build_config(f, o_rep, 200, 4);
      auto m_loaded = miro::load_model(cfg.model);
      if (cfg.model.rfind("zipf", 0) == 0)
        std::fprintf(stderr, "warning: the zipf source has no context dependence\n");
      emit(cfg.out, miro::run_repetition(cfg, m_loaded));
    } else if (*trap) {
      auto cfg = build_config(f, o_trap, 900, 10);
      auto m_loaded = miro::load_model(cfg.model);
      emit(cfg.out, miro::run_trap_trace(cfg, m_loaded));
    } else if (*estimate) {
      return run_estimate(f, o_est, probs_path, step, m);
    } else if (*compress) {
      return run_compress(f, o_comp, input, decode_path, verify);
    } else if (*gen) {
      return run_generate(f, o_gen, replay_out, text);
    }
    return 0;
  } catch (const miro::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const miro::DomainError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const miro::ModelIoError& e) {
    std::fprintf(stderr, "model error: %s\n", e.what());
    return kExitModelIo;
  } catch (const miro::FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kExitModelIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
