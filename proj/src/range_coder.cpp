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

#include "dred/range_coder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dred/errors.hpp"

namespace dred {

namespace {
constexpr std::uint32_t kTop = 1u << 24;
}  // namespace

SymbolModel build_model(const LaplaceParams& params) {
  SymbolModel model;
  std::array<double, kAlphabetSize> weight;

  if (params.r < kDegenerateR) {
    // Point mass at zero; everything else keeps the minimum frequency.
    weight.fill(0.0);
    weight[kMaxSymbol] = 1.0;
  } else {
    const double r = params.r;
    const double r_theta = std::pow(r, params.theta);
    weight[kMaxSymbol] = 1.0 - r_theta;
    double mass = 0.5 * (1.0 - r) * r_theta;  // P(1)
    for (int k = 1; k < kMaxSymbol; ++k) {
      weight[kMaxSymbol + k] = mass;
      weight[kMaxSymbol - k] = mass;
      mass *= r;
    }
    // The extremes absorb the tail: sum_{|k|>=255} P(k) = P(255)/(1-r).
    const double tail = mass / (1.0 - r);
    weight[0] = tail;
    weight[kAlphabetSize - 1] = tail;
  }

  std::array<std::uint32_t, kAlphabetSize> freq;
  std::uint64_t total = 0;
  for (int i = 0; i < kAlphabetSize; ++i) {
    const double scaled = std::floor(weight[i] * static_cast<double>(kFreqTotal));
    freq[i] = std::max<std::uint32_t>(1, static_cast<std::uint32_t>(scaled));
    total += freq[i];
  }
  // Give the rounding remainder to the peak; the Laplace peak is symbol 0,
  // which keeps the table symmetric.
  const std::int64_t diff =
      static_cast<std::int64_t>(kFreqTotal) - static_cast<std::int64_t>(total);
  freq[kMaxSymbol] = static_cast<std::uint32_t>(
      static_cast<std::int64_t>(freq[kMaxSymbol]) + diff);

  model.cum[0] = 0;
  for (int i = 0; i < kAlphabetSize; ++i) {
    model.cum[i + 1] = model.cum[i] + freq[i];
  }
  return model;
}

void RangeEncoder::shift_low() {
  const std::uint32_t carry = static_cast<std::uint32_t>(low_ >> 32);
  if (carry != 0 || low_ < 0xFF000000ull) {
    if (cache_valid_) out_.push_back(static_cast<std::uint8_t>(cache_ + carry));
    for (; pending_ff_ > 0; --pending_ff_) {
      out_.push_back(static_cast<std::uint8_t>(0xFFu + carry));
    }
    cache_ = static_cast<std::uint8_t>(low_ >> 24);
    cache_valid_ = true;
  } else {
    ++pending_ff_;
  }
  low_ = (low_ << 8) & 0xFFFFFFFFull;
}

void RangeEncoder::encode(const SymbolModel& model, int symbol) {
  if (symbol < -kMaxSymbol || symbol > kMaxSymbol) {
    throw std::invalid_argument("range coder symbol out of range");
  }
  const int idx = symbol + kMaxSymbol;
  // High-precision subdivision: boundary(c) = floor(range * c / 2^16).
  // With cum totalling exactly 2^16 the top boundary equals range, so the
  // full code space is used and the truncation loss per symbol is well
  // under 1e-4 bits.
  const auto boundary = [this](std::uint32_t c) {
    return static_cast<std::uint32_t>(
        (static_cast<std::uint64_t>(range_) * c) >> 16);
  };
  const std::uint32_t lo_off = boundary(model.cum[idx]);
  const std::uint32_t hi_off = boundary(model.cum[idx + 1]);
  low_ += lo_off;
  range_ = hi_off - lo_off;
  while (range_ < kTop) {
    shift_low();
    range_ <<= 8;
  }
}

CodedBuffer RangeEncoder::finish() {
  if (!finished_) {
    for (int i = 0; i < 4; ++i) shift_low();
    if (cache_valid_) out_.push_back(cache_);
    for (; pending_ff_ > 0; --pending_ff_) out_.push_back(0xFFu);
    finished_ = true;
  }
  CodedBuffer buffer;
  buffer.bytes = std::move(out_);
  buffer.bit_count = buffer.bytes.size() * 8;
  return buffer;
}

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> bytes) : in_(bytes) {
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

std::uint8_t RangeDecoder::next_byte() {
  if (pos_ >= in_.size()) throw FormatError("range coder input truncated");
  return in_[pos_++];
}

int RangeDecoder::decode(const SymbolModel& model) {
  const auto boundary = [this](std::uint32_t c) {
    return static_cast<std::uint32_t>(
        (static_cast<std::uint64_t>(range_) * c) >> 16);
  };
  // Largest index whose lower boundary is <= code (boundary(cum[0]) == 0).
  int lo = 0;
  int hi = kAlphabetSize;
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    if (boundary(model.cum[mid]) <= code_) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const std::uint32_t lo_off = boundary(model.cum[lo]);
  const std::uint32_t hi_off = boundary(model.cum[lo + 1]);
  code_ -= lo_off;
  range_ = hi_off - lo_off;
  while (range_ < kTop) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
  return lo - kMaxSymbol;
}

CodedBuffer encode_symbols(std::span<const int> symbols,
                           std::span<const SymbolModel> models) {
  if (models.size() != 1 && models.size() != symbols.size()) {
    throw std::invalid_argument("model count must be 1 or match symbol count");
  }
  RangeEncoder enc;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    enc.encode(models.size() == 1 ? models[0] : models[i], symbols[i]);
  }
  return enc.finish();
}

std::vector<int> decode_symbols(const CodedBuffer& buffer,
                                std::span<const SymbolModel> models,
                                std::size_t n) {
  if (models.size() != 1 && models.size() != n) {
    throw std::invalid_argument("model count must be 1 or match symbol count");
  }
  RangeDecoder dec(buffer.bytes);
  std::vector<int> symbols(n);
  for (std::size_t i = 0; i < n; ++i) {
    symbols[i] = dec.decode(models.size() == 1 ? models[0] : models[i]);
  }
  return symbols;
}

}  // namespace dred
