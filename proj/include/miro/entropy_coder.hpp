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

// Binary arithmetic coder driven by a ModelSource. Each step quantizes the
// model's conditional to integer frequencies summing to 2^32 (every id gets
// at least 1) and narrows a 62-bit interval; bits leave the coder one at a
// time with the usual underflow (pending bit) handling.
//
// The decoder must see the same model and token count. A different model is
// not detected; it silently yields different tokens.
//
// File layout, little-endian: "MIRC", u32 version, u32 n_tokens, u32 n_vocab,
// then the payload bytes (MSB first, zero padded).

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "miro/decoding.hpp"
#include "miro/error.hpp"
#include "miro/io.hpp"
#include "miro/models/model_source.hpp"

namespace miro {

inline constexpr std::array<char, 4> kCodeMagic = {'M', 'I', 'R', 'C'};
inline constexpr std::uint32_t kCodeVersion = 1;

struct CodeStream {
  /// Packed bits, most significant first; bits past bit_count are zero.
  std::vector<std::uint8_t> bytes;
  std::uint64_t bit_count = 0;
  std::uint64_t n_tokens = 0;
  std::uint32_t n_vocab = 0;

  bool bit(std::uint64_t i) const { return (bytes[i >> 3] >> (7 - (i & 7))) & 1U; }

  double bits_per_token() const {
    return n_tokens == 0 ? 0.0 : static_cast<double>(bit_count) / static_cast<double>(n_tokens);
  }
};

namespace detail {

inline constexpr int kCoderBits = 62;
inline constexpr std::uint64_t kCoderTop = (std::uint64_t{1} << kCoderBits) - 1;
inline constexpr std::uint64_t kCoderHalf = std::uint64_t{1} << (kCoderBits - 1);
inline constexpr std::uint64_t kCoderQuarter = std::uint64_t{1} << (kCoderBits - 2);
inline constexpr int kFreqBits = 32;
inline constexpr std::uint64_t kFreqTotal = std::uint64_t{1} << kFreqBits;

/// Cumulative frequencies by token id: symbol t owns [cum[t], cum[t+1]).
/// f_t = 1 + floor(p_t (2^32 - N)); the rounding remainder goes to the most
/// probable token.
inline std::vector<std::uint64_t> quantize(const TokenDistribution& dist, std::size_t n_vocab) {
  if (n_vocab == 0 || n_vocab >= kFreqTotal / 2)
    throw DomainError("entropy coder: vocabulary size out of range");
  std::vector<std::uint64_t> freq(n_vocab, 1);
  const double scale = static_cast<double>(kFreqTotal - n_vocab);
  std::uint64_t used = n_vocab;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    const TokenId id = dist.token_ids[i];
    if (id >= n_vocab) throw DomainError("entropy coder: model emitted an id outside vocabulary");
    const auto extra = static_cast<std::uint64_t>(std::floor(dist.probs[i] * scale));
    freq[id] += extra;
    used += extra;
  }
  if (used > kFreqTotal) {
    // Only reachable when probabilities sum slightly above one.
    const std::uint64_t over = used - kFreqTotal;
    freq[dist.modal_token()] -= std::min(over, freq[dist.modal_token()] - 1);
    used = kFreqTotal;
  }
  freq[dist.modal_token()] += kFreqTotal - used;
  std::vector<std::uint64_t> cum(n_vocab + 1, 0);
  for (std::size_t t = 0; t < n_vocab; ++t) cum[t + 1] = cum[t] + freq[t];
  return cum;
}

inline std::shared_ptr<const TokenDistribution> coder_step(ModelSource& model,
                                                           std::span<const TokenId> prefix) {
  auto dist = model.next_distribution(prefix);
  if (!dist) throw ModelIoError("entropy coder: model ended early", static_cast<long>(prefix.size()));
  if (dist->size() == 0)
    throw ModelIoError("entropy coder: empty distribution", static_cast<long>(prefix.size()));
  return dist;
}

inline void narrow(std::uint64_t& low, std::uint64_t& high, std::uint64_t lo_cum,
                   std::uint64_t hi_cum) {
  const unsigned __int128 range = static_cast<unsigned __int128>(high - low) + 1;
  high = low + static_cast<std::uint64_t>((range * hi_cum) >> kFreqBits) - 1;
  low = low + static_cast<std::uint64_t>((range * lo_cum) >> kFreqBits);
}

class BitWriter {
 public:
  void put(bool b) {
    if ((stream_.bit_count & 7) == 0) stream_.bytes.push_back(0);
    if (b) stream_.bytes.back() |= static_cast<std::uint8_t>(0x80U >> (stream_.bit_count & 7));
    ++stream_.bit_count;
  }
  void put_with_pending(bool b, std::uint64_t& pending) {
    put(b);
    for (; pending > 0; --pending) put(!b);
  }
  CodeStream& stream() { return stream_; }

 private:
  CodeStream stream_;
};

}  // namespace detail

/// Encodes `tokens` under the model's teacher-forced conditionals.
inline CodeStream encode(std::span<const TokenId> tokens, ModelSource& model) {
  using namespace detail;
  const std::size_t n_vocab = model.n_vocab();
  for (TokenId t : tokens)
    if (t >= n_vocab) throw DomainError("encode: token " + std::to_string(t) + " outside vocabulary");

  BitWriter out;
  std::uint64_t low = 0;
  std::uint64_t high = kCoderTop;
  std::uint64_t pending = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto dist = coder_step(model, tokens.first(i));
    const auto cum = quantize(*dist, n_vocab);
    narrow(low, high, cum[tokens[i]], cum[tokens[i] + 1]);
    for (;;) {
      if (high < kCoderHalf) {
        out.put_with_pending(false, pending);
      } else if (low >= kCoderHalf) {
        out.put_with_pending(true, pending);
        low -= kCoderHalf;
        high -= kCoderHalf;
      } else if (low >= kCoderQuarter && high < kCoderHalf + kCoderQuarter) {
        ++pending;
        low -= kCoderQuarter;
        high -= kCoderQuarter;
      } else {
        break;
      }
      low <<= 1;
      high = (high << 1) | 1;
    }
  }
  if (!tokens.empty()) {
    ++pending;
    out.put_with_pending(low >= kCoderQuarter, pending);
  }
  CodeStream s = std::move(out.stream());
  s.n_tokens = tokens.size();
  s.n_vocab = static_cast<std::uint32_t>(n_vocab);
  return s;
}

/// Decodes `n_tokens` tokens. Throws FormatError if the stream runs out
/// before that many tokens are recovered.
inline std::vector<TokenId> decode(const CodeStream& stream, ModelSource& model,
                                   std::size_t n_tokens) {
  using namespace detail;
  const std::size_t n_vocab = model.n_vocab();
  if (stream.n_vocab != 0 && stream.n_vocab != n_vocab)
    throw DomainError("decode: stream vocabulary differs from model");
  if (stream.bytes.size() * 8 < stream.bit_count) throw FormatError("decode: inconsistent bit count");

  std::uint64_t pos = 0;
  const std::uint64_t limit = stream.bit_count + kCoderBits;
  auto next_bit = [&]() -> std::uint64_t {
    if (pos >= limit) throw FormatError("decode: stream exhausted");
    const std::uint64_t b = pos < stream.bit_count ? stream.bit(pos) : 0;
    ++pos;
    return b;
  };

  std::vector<TokenId> tokens;
  tokens.reserve(n_tokens);
  if (n_tokens == 0) return tokens;
  if (stream.bit_count == 0) throw FormatError("decode: stream exhausted");
  std::uint64_t low = 0;
  std::uint64_t high = kCoderTop;
  std::uint64_t value = 0;
  for (int i = 0; i < kCoderBits; ++i) value = (value << 1) | next_bit();

  for (std::size_t i = 0; i < n_tokens; ++i) {
    const auto dist = coder_step(model, tokens);
    const auto cum = quantize(*dist, n_vocab);
    const unsigned __int128 range = static_cast<unsigned __int128>(high - low) + 1;
    const auto target = static_cast<std::uint64_t>(
        ((static_cast<unsigned __int128>(value - low) + 1) * kFreqTotal - 1) / range);
    const auto it = std::upper_bound(cum.begin(), cum.end(), target);
    const auto sym = static_cast<TokenId>((it - cum.begin()) - 1);
    tokens.push_back(sym);
    narrow(low, high, cum[sym], cum[sym + 1]);
    for (;;) {
      if (high < kCoderHalf) {
      } else if (low >= kCoderHalf) {
        low -= kCoderHalf;
        high -= kCoderHalf;
        value -= kCoderHalf;
      } else if (low >= kCoderQuarter && high < kCoderHalf + kCoderQuarter) {
        low -= kCoderQuarter;
        high -= kCoderQuarter;
        value -= kCoderQuarter;
      } else {
        break;
      }
      low <<= 1;
      high = (high << 1) | 1;
      value = (value << 1) | next_bit();
    }
  }
  return tokens;
}

/// Compression relative to a fixed-width code of ceil(log2 N) bits per token.
inline double percent_compression(const CodeStream& stream) {
  if (stream.n_tokens == 0 || stream.n_vocab < 2) return 0.0;
  const double raw = static_cast<double>(stream.n_tokens) *
                     std::ceil(std::log2(static_cast<double>(stream.n_vocab)));
  return 100.0 * (1.0 - static_cast<double>(stream.bit_count) / raw);
}

inline std::string encode_code_file(const CodeStream& stream) {
  if (stream.n_tokens > 0xFFFFFFFFULL) throw FormatError("code file: too many tokens");
  std::string out(kCodeMagic.begin(), kCodeMagic.end());
  detail::put_u32(out, kCodeVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(stream.n_tokens));
  detail::put_u32(out, stream.n_vocab);
  out.append(reinterpret_cast<const char*>(stream.bytes.data()), stream.bytes.size());
  return out;
}

/// The bit count is restored at byte granularity.
inline CodeStream decode_code_file(std::string_view bytes) {
  if (bytes.size() < 16) throw FormatError("code file: truncated header");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (std::memcmp(p, kCodeMagic.data(), 4) != 0) throw FormatError("code file: bad magic");
  const std::uint32_t version = detail::get_u32(p + 4);
  if (version != kCodeVersion)
    throw FormatError("code file: unsupported version " + std::to_string(version));
  CodeStream s;
  s.n_tokens = detail::get_u32(p + 8);
  s.n_vocab = detail::get_u32(p + 12);
  s.bytes.assign(p + 16, p + bytes.size());
  s.bit_count = s.bytes.size() * 8;
  return s;
}

inline void write_code_file(const std::string& path, const CodeStream& stream) {
  const std::string bytes = encode_code_file(stream);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelIoError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ModelIoError("short write to " + path);
}

inline CodeStream read_code_file(const std::string& path) {
  return decode_code_file(detail::read_file(path));
}

}  // namespace miro
