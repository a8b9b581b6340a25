// Copyright 2026 The dred-toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DRED_RANGE_CODER_HPP
#define DRED_RANGE_CODER_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dred/laplace.hpp"

namespace dred {

// Coded symbols live in [-kMaxSymbol, kMaxSymbol]; tail mass beyond the
// extremes is folded into them when a model is built.
inline constexpr int kMaxSymbol = 255;
inline constexpr int kAlphabetSize = 2 * kMaxSymbol + 1;
// Cumulative frequencies always total exactly 2^16.
inline constexpr std::uint32_t kFreqTotal = 1u << 16;

// Integer frequency table for one Laplace model.  cum[i] is the cumulative
// frequency of all symbols below index i (index = symbol + kMaxSymbol);
// cum[kAlphabetSize] == kFreqTotal and every symbol has frequency >= 1.
struct SymbolModel {
  std::array<std::uint32_t, kAlphabetSize + 1> cum{};

  std::uint32_t freq(int symbol) const {
    const int idx = symbol + kMaxSymbol;
    return cum[idx + 1] - cum[idx];
  }
};

// Quantizes the discrete Laplace pmf to integer frequencies: proportional
// to discrete_pmf, floored at 1 so every symbol stays codable, renormalized
// to total 2^16 by adjusting the peak (always symbol 0).
SymbolModel build_model(const LaplaceParams& params);

struct CodedBuffer {
  std::vector<std::uint8_t> bytes;
  std::size_t bit_count = 0;
};

// 32-bit range encoder, 16-bit cumulative precision, byte-wise (big-endian)
// renormalization.  Carries are handled with a 64-bit low register plus a
// pending-0xFF counter, so no dummy leading byte is needed.  finish() emits
// the full 32 fractional bits of low: total output is exactly
// (renormalization bytes + 4), the same count the decoder consumes.
class RangeEncoder {
 public:
  // symbol must be in [-kMaxSymbol, kMaxSymbol]; throws std::invalid_argument.
  void encode(const SymbolModel& model, int symbol);
  CodedBuffer finish();

 private:
  void shift_low();

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  bool cache_valid_ = false;
  std::uint64_t pending_ff_ = 0;
  std::vector<std::uint8_t> out_;
  bool finished_ = false;
};

// Decoding mirror of RangeEncoder.  Reading past the end of the buffer
// raises FormatError (a valid buffer is always long enough by construction).
class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const std::uint8_t> bytes);

  int decode(const SymbolModel& model);
  std::size_t bytes_consumed() const { return pos_; }

 private:
  std::uint8_t next_byte();

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint32_t code_ = 0;
};

// Convenience wrappers.  models must have either one entry (shared by all
// symbols) or exactly one entry per symbol.
CodedBuffer encode_symbols(std::span<const int> symbols,
                           std::span<const SymbolModel> models);
std::vector<int> decode_symbols(const CodedBuffer& buffer,
                                std::span<const SymbolModel> models,
                                std::size_t n);

}  // namespace dred

#endif  // DRED_RANGE_CODER_HPP
