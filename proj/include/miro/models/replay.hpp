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

// Replay files: recorded per-step conditionals for teacher-forced scoring.
//
// Layout, little-endian:
//
//   bytes 0..3   magic "MIRO"
//   u32          version (1)
//   u32          n_vocab
//   u32          n_steps
//   u32[n_steps] token ids
//   f32[n_steps][n_vocab] probabilities; row i is P(. | tokens[0..i))

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "miro/decoding.hpp"
#include "miro/error.hpp"
#include "miro/io.hpp"
#include "miro/models/model_source.hpp"

namespace miro {

inline constexpr std::array<char, 4> kReplayMagic = {'M', 'I', 'R', 'O'};
inline constexpr std::uint32_t kReplayVersion = 1;
/// Allowed |row sum - 1| for float32 rows.
inline constexpr double kReplayRowTolerance = 1e-3;

struct ReplayData {
  std::uint32_t n_vocab = 0;
  std::vector<TokenId> tokens;
  /// n_steps * n_vocab, row-major.
  std::vector<float> rows;

  std::size_t n_steps() const { return tokens.size(); }
  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(rows).subspan(i * n_vocab, n_vocab);
  }
};

inline std::string encode_replay(const ReplayData& data) {
  if (data.rows.size() != data.n_steps() * data.n_vocab)
    throw FormatError("replay: rows do not match n_steps * n_vocab");
  std::string out(kReplayMagic.begin(), kReplayMagic.end());
  detail::put_u32(out, kReplayVersion);
  detail::put_u32(out, data.n_vocab);
  detail::put_u32(out, static_cast<std::uint32_t>(data.n_steps()));
  for (TokenId t : data.tokens) detail::put_u32(out, t);
  for (float f : data.rows) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

inline void write_replay(const std::string& path, const ReplayData& data) {
  const std::string bytes = encode_replay(data);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelIoError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ModelIoError("short write to " + path);
}

/// Parses and validates a replay image: magic, version, exact length, every
/// row finite, nonnegative and summing to 1 within kReplayRowTolerance.
inline ReplayData decode_replay(std::string_view bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 16) throw FormatError("replay: truncated header");
  if (std::memcmp(p, kReplayMagic.data(), 4) != 0) throw FormatError("replay: bad magic");
  const std::uint32_t version = detail::get_u32(p + 4);
  if (version != kReplayVersion)
    throw FormatError("replay: unsupported version " + std::to_string(version));
  ReplayData d;
  d.n_vocab = detail::get_u32(p + 8);
  const std::uint32_t n_steps = detail::get_u32(p + 12);
  if (d.n_vocab == 0) throw FormatError("replay: n_vocab is zero");
  const std::uint64_t expected =
      16ULL + 4ULL * n_steps + 4ULL * static_cast<std::uint64_t>(n_steps) * d.n_vocab;
  if (bytes.size() < expected) throw FormatError("replay: truncated file");
  if (bytes.size() > expected) throw FormatError("replay: trailing bytes after last row");
  std::size_t off = 16;
  d.tokens.resize(n_steps);
  for (auto& t : d.tokens) {
    t = detail::get_u32(p + off);
    off += 4;
    if (t >= d.n_vocab) throw FormatError("replay: token id outside vocabulary");
  }
  d.rows.resize(static_cast<std::size_t>(n_steps) * d.n_vocab);
  for (auto& f : d.rows) {
    f = std::bit_cast<float>(detail::get_u32(p + off));
    off += 4;
  }
  for (std::size_t i = 0; i < n_steps; ++i) {
    double sum = 0.0;
    for (float f : d.row(i)) {
      if (!std::isfinite(f) || f < 0.0f)
        throw FormatError("replay: row " + std::to_string(i) + " has an invalid probability");
      sum += f;
    }
    if (std::abs(sum - 1.0) > kReplayRowTolerance)
      throw FormatError("replay: row " + std::to_string(i) + " sums to " + std::to_string(sum));
  }
  return d;
}

inline ReplayData read_replay(const std::string& path) {
  return decode_replay(detail::read_file(path));
}

/// Serves recorded rows for teacher-forced evaluation. Only the recorded
/// prefixes are valid; anything else is a ModelIoError.
class ReplaySource final : public ModelSource {
 public:
  explicit ReplaySource(ReplayData data) : data_(std::move(data)) {}

  std::size_t n_vocab() const override { return data_.n_vocab; }
  std::string name() const override {
    return "replay(steps=" + std::to_string(data_.n_steps()) + ")";
  }

  const std::vector<TokenId>& recorded_tokens() const { return data_.tokens; }
  const ReplayData& data() const { return data_; }

  std::shared_ptr<const TokenDistribution> next_distribution(
      std::span<const TokenId> prefix) override {
    const std::size_t i = prefix.size();
    if (i > data_.n_steps() ||
        !std::equal(prefix.begin(), prefix.end(), data_.tokens.begin()))
      throw ModelIoError("replay: prefix diverges from the recorded tokens; free-running "
                         "generation is not supported",
                         static_cast<long>(i));
    if (i == data_.n_steps()) return nullptr;
    const auto row = data_.row(i);
    std::vector<TokenId> ids(data_.n_vocab);
    std::vector<double> weights(data_.n_vocab);
    for (std::uint32_t t = 0; t < data_.n_vocab; ++t) {
      ids[t] = t;
      weights[t] = row[t];
    }
    return std::make_shared<const TokenDistribution>(
        TokenDistribution::from_weights(std::move(ids), std::move(weights), data_.n_vocab));
  }

 private:
  ReplayData data_;
};

inline ReplaySource open_replay(const std::string& path) { return ReplaySource(read_replay(path)); }

}  // namespace miro
