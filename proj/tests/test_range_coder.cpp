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

#include <cmath>
#include <cstdint>
#include <vector>

#include <doctest.h>

#include "dred/errors.hpp"
#include "dred/laplace.hpp"
#include "dred/range_coder.hpp"
#include "dred/rng.hpp"
#include "test_oracles.hpp"

using namespace dred;

namespace {

LaplaceParams implicit_params(double r) {
  LaplaceParams p;
  p.r = r;
  p.theta = theta_implicit(r);
  return p;
}

// Inverse-CDF sampler for the discrete Laplace pmf.
long sample_pmf(const LaplaceParams& p, Rng& rng) {
  double u = rng.uniform();
  u -= discrete_pmf(0, p);
  if (u < 0.0) return 0;
  for (long k = 1; k <= kMaxSymbol; ++k) {
    const double mass = discrete_pmf(k, p);
    u -= 2.0 * mass;
    if (u < 0.0) return u < -mass ? -k : k;
  }
  return kMaxSymbol;
}

}  // namespace

TEST_CASE("model construction") {
  SUBCASE("peak frequency tracks the pmf") {
    const SymbolModel m = build_model(implicit_params(0.6));
    const double p0 = static_cast<double>(m.freq(0)) / kFreqTotal;
    CHECK(p0 == doctest::Approx(0.25).epsilon(0.002 / 0.25));
  }

  SUBCASE("degenerate model concentrates everything on zero") {
    LaplaceParams p;
    p.r = 1e-9 / 2;
    p.theta = 0.5;
    const SymbolModel m = build_model(p);
    CHECK(m.freq(0) == kFreqTotal - (kAlphabetSize - 1));
    CHECK(m.freq(1) == 1);
    CHECK(m.freq(-255) == 1);
  }

  SUBCASE("symmetric, strictly increasing, totals 2^16") {
    for (double r : {0.05, 0.3, 0.6, 0.9, 0.995}) {
      const SymbolModel m = build_model(implicit_params(r));
      CHECK(m.cum[0] == 0);
      CHECK(m.cum[kAlphabetSize] == kFreqTotal);
      for (int i = 0; i < kAlphabetSize; ++i) CHECK(m.cum[i + 1] > m.cum[i]);
      for (int k = 1; k <= kMaxSymbol; ++k) CHECK(m.freq(k) == m.freq(-k));
    }
  }
}

TEST_CASE("encode basics") {
  SUBCASE("100 zeros under a sharp model fit in 8 bytes") {
    const SymbolModel m = build_model(implicit_params(0.01));
    RangeEncoder enc;
    for (int i = 0; i < 100; ++i) enc.encode(m, 0);
    const CodedBuffer buf = enc.finish();
    CHECK(buf.bytes.size() <= 8);
  }

  SUBCASE("out-of-range symbol") {
    const SymbolModel m = build_model(implicit_params(0.6));
    RangeEncoder enc;
    CHECK_THROWS_AS(enc.encode(m, 256), std::invalid_argument);
    CHECK_THROWS_AS(enc.encode(m, -256), std::invalid_argument);
  }

  SUBCASE("size bound: model bits plus 32-bit termination") {
    Rng rng(7);
    for (double r : {0.2, 0.6, 0.9}) {
      const LaplaceParams p = implicit_params(r);
      const SymbolModel m = build_model(p);
      std::vector<int> symbols;
      double model_bits = 0.0;
      for (int i = 0; i < 5000; ++i) {
        const int s = static_cast<int>(sample_pmf(p, rng));
        symbols.push_back(s);
        model_bits -= std::log2(static_cast<double>(m.freq(s)) / kFreqTotal);
      }
      const CodedBuffer buf = encode_symbols(symbols, std::span(&m, 1));
      // Output is whole bytes, so the payload rounds up to the next byte
      // boundary before the 4-byte flush.
      CHECK(static_cast<double>(buf.bit_count) <=
            std::ceil(model_bits / 8.0) * 8.0 + 32.0);
    }
  }

  SUBCASE("deterministic output") {
    const SymbolModel m = build_model(implicit_params(0.6));
    std::vector<int> symbols = {0, 3, -1, 7, 0, 0, -12, 255, -255, 1};
    const CodedBuffer a = encode_symbols(symbols, std::span(&m, 1));
    const CodedBuffer b = encode_symbols(symbols, std::span(&m, 1));
    CHECK(a.bytes == b.bytes);
  }
}

TEST_CASE("round trips") {
  SUBCASE("empty") {
    const SymbolModel m = build_model(implicit_params(0.6));
    const CodedBuffer buf = encode_symbols({}, std::span(&m, 1));
    CHECK(buf.bytes.size() == 4);
    CHECK(decode_symbols(buf, std::span(&m, 1), 0).empty());
  }

  SUBCASE("single symbol") {
    const SymbolModel m = build_model(implicit_params(0.6));
    const std::vector<int> symbols = {5};
    const CodedBuffer buf = encode_symbols(symbols, std::span(&m, 1));
    CHECK(decode_symbols(buf, std::span(&m, 1), 1) == symbols);
  }

  SUBCASE("fuzz, shared model") {
    Rng rng(101);
    for (int trial = 0; trial < 300; ++trial) {
      const double r = rng.uniform(0.02, 0.99);
      const LaplaceParams p = implicit_params(r);
      const SymbolModel m = build_model(p);
      const int n = static_cast<int>(rng.uniform_int(0, 400));
      std::vector<int> symbols(n);
      for (int i = 0; i < n; ++i) {
        symbols[i] = static_cast<int>(rng.uniform_int(-kMaxSymbol, kMaxSymbol));
      }
      const CodedBuffer buf = encode_symbols(symbols, std::span(&m, 1));
      CHECK(decode_symbols(buf, std::span(&m, 1), n) == symbols);
    }
  }

  SUBCASE("fuzz, per-symbol model switching") {
    Rng rng(202);
    const std::vector<SymbolModel> pool = {
        build_model(implicit_params(0.1)), build_model(implicit_params(0.5)),
        build_model(implicit_params(0.9)), build_model(implicit_params(0.99))};
    std::vector<int> symbols(1000);
    std::vector<SymbolModel> models;
    for (auto& s : symbols) {
      s = static_cast<int>(rng.uniform_int(-kMaxSymbol, kMaxSymbol));
      models.push_back(pool[static_cast<std::size_t>(rng.uniform_int(0, 3))]);
    }
    const CodedBuffer buf = encode_symbols(symbols, models);
    CHECK(decode_symbols(buf, models, symbols.size()) == symbols);
  }
}

TEST_CASE("compression efficiency on matched samples") {
  const LaplaceParams p = implicit_params(0.6);
  const double entropy = oracle::discrete_entropy_bits(p);
  // Closed form: -log2((1-r)/(1+r)) + E|k| * (-log2 r), E|k| = 2r/(1-r^2).
  CHECK(entropy == doctest::Approx(3.3818104890616366).epsilon(1e-9));

  const SymbolModel m = build_model(p);
  Rng rng(42);
  const int n = 100'000;
  std::vector<int> symbols(n);
  for (auto& s : symbols) s = static_cast<int>(sample_pmf(p, rng));
  const CodedBuffer buf = encode_symbols(symbols, std::span(&m, 1));

  const double bits_per_symbol = static_cast<double>(buf.bit_count) / n;
  CHECK(bits_per_symbol >= entropy * 0.99);
  CHECK(bits_per_symbol <= entropy * 1.01);
  CHECK(decode_symbols(buf, std::span(&m, 1), n) == symbols);
}

TEST_CASE("truncated input raises FormatError") {
  const SymbolModel m = build_model(implicit_params(0.6));
  Rng rng(55);
  std::vector<int> symbols(200);
  for (auto& s : symbols) s = static_cast<int>(rng.uniform_int(-200, 200));
  CodedBuffer buf = encode_symbols(symbols, std::span(&m, 1));

  CodedBuffer cut = buf;
  cut.bytes.resize(buf.bytes.size() / 2);
  cut.bit_count = cut.bytes.size() * 8;
  CHECK_THROWS_AS(decode_symbols(cut, std::span(&m, 1), symbols.size()),
                  FormatError);

  CodedBuffer tiny;
  tiny.bytes = {0x01, 0x02};
  CHECK_THROWS_AS(RangeDecoder(tiny.bytes), FormatError);
}
