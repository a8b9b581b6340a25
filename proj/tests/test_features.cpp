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

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "dred/errors.hpp"
#include "dred/features.hpp"

using namespace dred;

namespace {

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("synthetic feature generation") {
  SUBCASE("preconditions") {
    CHECK_THROWS_AS(gen_synthetic_features(1, 0), std::invalid_argument);
    CHECK_THROWS_AS(gen_synthetic_features(1, 7), std::invalid_argument);
    CHECK_THROWS_AS(gen_synthetic_features(1, -4), std::invalid_argument);
  }

  SUBCASE("deterministic per seed") {
    const FeatureSequence a = gen_synthetic_features(7, 400);
    const FeatureSequence b = gen_synthetic_features(7, 400);
    CHECK(a == b);
    const FeatureSequence c = gen_synthetic_features(8, 400);
    CHECK(a.frames[0].cepstrum != c.frames[0].cepstrum);
  }

  SUBCASE("value ranges") {
    const FeatureSequence s = gen_synthetic_features(7, 400);
    REQUIRE(s.size() == 400);
    for (const FeatureVector& f : s.frames) {
      CHECK(f.voicing >= -1.0f);
      CHECK(f.voicing <= 1.0f);
      CHECK(f.pitch >= kPitchLogMin);
      CHECK(f.pitch <= kPitchLogMax);
      for (float c : f.cepstrum) {
        CHECK(c >= -4.0f);
        CHECK(c <= 4.0f);
      }
    }
  }

  SUBCASE("voicing alternates between high and low runs") {
    const FeatureSequence s = gen_synthetic_features(3, 2000);
    int high = 0;
    int low = 0;
    for (const FeatureVector& f : s.frames) {
      if (f.voicing > 0.7f) ++high;
      if (f.voicing < 0.2f) ++low;
    }
    // Nearly every frame should sit in one of the two bands.
    CHECK(high + low > 1900);
    CHECK(high > 300);
    CHECK(low > 300);
  }
}

TEST_CASE("feature file round trip") {
  const auto path = temp_file("dred_feat_test.bin");

  SUBCASE("bit-exact round trip") {
    const FeatureSequence s = gen_synthetic_features(11, 2);
    write_features(path, s);
    CHECK(read_features(path) == s);

    const FeatureSequence big = gen_synthetic_features(12, 400);
    write_features(path, big);
    CHECK(read_features(path) == big);
    // 8 magic + 2 version + 4 count + 400*20*4 payload.
    CHECK(std::filesystem::file_size(path) == 8 + 2 + 4 + 400 * 20 * 4);
  }

  SUBCASE("wrong magic") {
    std::ofstream out(path, std::ios::binary);
    out.write("NOTDREDX", 8);
    out.close();
    CHECK_THROWS_AS(read_features(path), FormatError);
  }

  SUBCASE("truncated body") {
    const FeatureSequence s = gen_synthetic_features(11, 10);
    write_features(path, s);
    // Drop the last frame's bytes but keep the 10-frame header.
    const auto full = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, full - 20 * 4);
    CHECK_THROWS_AS(read_features(path), FormatError);
  }

  std::filesystem::remove(path);
}
