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
#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "dred/errors.hpp"
#include "dred/latent_codec.hpp"
#include "dred/rd_trainer.hpp"
#include "dred/rng.hpp"

using namespace dred;

namespace {

const ReferenceTransform& shared_transform() {
  static const ReferenceTransform t{};
  return t;
}

}  // namespace

TEST_CASE("encode_stream basics") {
  const ReferenceTransform& t = shared_transform();

  SUBCASE("one latent and one initial state per feature pair") {
    const FeatureSequence f = gen_synthetic_features(5, 40);
    const auto [latents, states] = encode_stream(f, t);
    REQUIRE(latents.size() == 20);
    REQUIRE(states.size() == 20);
    CHECK(latents[0].values.size() == static_cast<std::size_t>(t.latent_dim()));
    CHECK(states[0].values.size() == static_cast<std::size_t>(t.state_dim()));
    for (int i = 0; i < 20; ++i) CHECK(latents[i].frame_index == i);
  }

  SUBCASE("odd frame count rejected") {
    FeatureSequence f = gen_synthetic_features(5, 40);
    f.frames.pop_back();
    CHECK_THROWS_AS(encode_stream(f, t), std::invalid_argument);
  }

  SUBCASE("causal prefix property") {
    const FeatureSequence all = gen_synthetic_features(9, 80);
    FeatureSequence head;
    head.frames.assign(all.frames.begin(), all.frames.begin() + 40);
    const auto [lat_all, st_all] = encode_stream(all, t);
    const auto [lat_head, st_head] = encode_stream(head, t);
    for (int i = 0; i < 20; ++i) {
      CHECK(lat_all[i].values == lat_head[i].values);
      CHECK(st_all[i].values == st_head[i].values);
    }
  }

  SUBCASE("deterministic") {
    const FeatureSequence f = gen_synthetic_features(5, 40);
    const auto [a, sa] = encode_stream(f, t);
    const auto [b, sb] = encode_stream(f, t);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].values == b[i].values);
  }
}

TEST_CASE("packet decode") {
  const ReferenceTransform& t = shared_transform();
  const FeatureSequence f = gen_synthetic_features(6, 120);
  const auto [latents, states] = encode_stream(f, t);

  SUBCASE("emits frames_per_latent frames per latent") {
    std::vector<std::vector<double>> packet;
    for (int j = 0; j < 26; ++j) packet.push_back(latents[51 - 2 * j].values);
    const FeatureSequence rec = decode_packet_latents(packet, states[51].values, t);
    CHECK(rec.size() == 104);

    const FeatureSequence one =
        decode_packet_latents({latents[51].values}, states[51].values, t);
    CHECK(one.size() == 4);
  }

  SUBCASE("empty packet rejected") {
    CHECK_THROWS_AS(decode_packet_latents({}, states[0].values, t),
                    std::invalid_argument);
  }

  SUBCASE("self-contained: independent of any other stream state") {
    std::vector<std::vector<double>> packet;
    for (int j = 0; j < 5; ++j) packet.push_back(latents[30 - 2 * j].values);
    const FeatureSequence a = decode_packet_latents(packet, states[30].values, t);
    // Encode a different stream in between; decode again.
    const FeatureSequence other = gen_synthetic_features(1234, 200);
    (void)encode_stream(other, t);
    const FeatureSequence b = decode_packet_latents(packet, states[30].values, t);
    CHECK(a == b);
  }

  SUBCASE("stride geometry: strided halves tile their spans completely") {
    std::vector<std::vector<double>> even_half, odd_half;
    for (int j = 0; j < 10; ++j) {
      even_half.push_back(latents[40 - 2 * j].values);
      odd_half.push_back(latents[41 - 2 * j].values);
    }
    const FeatureSequence rec_even =
        decode_packet_latents(even_half, states[40].values, t);
    const FeatureSequence rec_odd =
        decode_packet_latents(odd_half, states[41].values, t);
    CHECK(rec_even.size() == 40);
    CHECK(rec_odd.size() == 40);
  }

  SUBCASE("stride 4 transform covers 80 ms per latent") {
    TransformConfig cfg;
    cfg.stride = 4;
    const ReferenceTransform t4(cfg);
    const auto [lat4, st4] = encode_stream(f, t4);
    const FeatureSequence rec =
        decode_packet_latents({lat4[20].values}, st4[20].values, t4);
    CHECK(rec.size() == 8);
  }
}

TEST_CASE("quantize latent / quantize IS") {
  const ReferenceTransform& t = shared_transform();
  const FeatureSequence f = gen_synthetic_features(21, 400);
  const QuantizerTable table = make_heuristic_table(t, f);
  const auto [latents, states] = encode_stream(f, t);

  SUBCASE("zero input gives zero symbols") {
    const std::vector<double> zero(t.latent_dim(), 0.0);
    const QuantizedLatent q = quantize_latent(zero, table, 3);
    for (int s : q.symbols) CHECK(s == 0);
    for (double d : q.dequantized) CHECK(d == 0.0);

    const std::vector<double> zero_is(t.state_dim(), 0.0);
    const QuantizedLatent qs = quantize_is(zero_is, table, 3);
    for (int s : qs.symbols) CHECK(s == 0);
  }

  SUBCASE("degenerate scale collapses the dimension") {
    QuantizerTable tbl = table;
    tbl.latent_at(0, 7).scale = 1e-7f;
    const QuantizedLatent q = quantize_latent(latents[10].values, tbl, 0);
    CHECK(q.symbols[7] == 0);
    CHECK(q.dequantized[7] == 0.0);
  }

  SUBCASE("round-trip error bound per dimension") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
      const int l = static_cast<int>(rng.uniform_int(0, kNumLambda - 1));
      const int step =
          static_cast<int>(rng.uniform_int(0, static_cast<int>(latents.size()) - 1));
      const QuantizedLatent q = quantize_latent(latents[step].values, table, l);
      for (int i = 0; i < t.latent_dim(); ++i) {
        const DimQuant& d = table.latent_at(l, i);
        if (d.scale < kDegenerateScale) continue;
        if (std::abs(q.symbols[i]) >= 255) continue;  // clamped tail
        const double bound = (0.5 + d.delta) / d.scale + 1e-9;
        CHECK(std::abs(q.dequantized[i] - latents[step].values[i]) <= bound);
      }
    }
  }

  SUBCASE("IS round-trip error bound") {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
      const int l = static_cast<int>(rng.uniform_int(0, kNumLambda - 1));
      const int step =
          static_cast<int>(rng.uniform_int(0, static_cast<int>(states.size()) - 1));
      const QuantizedLatent q = quantize_is(states[step].values, table, l);
      for (int i = 0; i < t.state_dim(); ++i) {
        const DimQuant& d = table.is_at(l, i);
        if (d.scale < kDegenerateScale) continue;
        if (std::abs(q.symbols[i]) >= 255) continue;
        const double bound = (0.5 + d.delta) / d.scale + 1e-9;
        CHECK(std::abs(q.dequantized[i] - states[step].values[i]) <= bound);
      }
    }
  }

  SUBCASE("reconstruction distortion grows from lambda 0 to lambda 15") {
    auto reconstruct = [&](int l) {
      const int newest = 99;
      const int m = 25;
      std::vector<std::vector<double>> deq;
      for (int j = 0; j < m; ++j) {
        deq.push_back(
            quantize_latent(latents[newest - 2 * j].values, table, l).dequantized);
      }
      const QuantizedLatent is_q = quantize_is(states[newest].values, table, l);
      const FeatureSequence rec = decode_packet_latents(deq, is_q.dequantized, t);
      FeatureSequence truth;
      const int first = 2 * (newest - 2 * (m - 1)) - 2;
      truth.frames.assign(f.frames.begin() + first,
                          f.frames.begin() + first + static_cast<int>(rec.size()));
      return distortion(truth, rec);
    };
    CHECK(reconstruct(0) < reconstruct(15));
  }
}

TEST_CASE("quantizer table file round trip") {
  const ReferenceTransform& t = shared_transform();
  const FeatureSequence f = gen_synthetic_features(21, 400);
  const QuantizerTable table = make_heuristic_table(t, f);

  const auto path = std::filesystem::temp_directory_path() / "dred_qtab_test.bin";
  save_table(path, table);
  const QuantizerTable back = load_table(path);
  CHECK(back == table);

  SUBCASE("bad magic") {
    std::ofstream out(path, std::ios::binary);
    out.write("DREDXXXX", 8);
    out.close();
    CHECK_THROWS_AS(load_table(path), FormatError);
  }

  std::filesystem::remove(path);
}
