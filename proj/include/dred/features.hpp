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

#ifndef DRED_FEATURES_HPP
#define DRED_FEATURES_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace dred {

inline constexpr int kCepstrumDim = 18;
inline constexpr int kFeatureDim = 20;

// One 10-ms acoustic vector: 18 Bark-cepstral coefficients, log2 pitch
// frequency, and a voicing (pitch correlation) value in [-1, 1].
struct FeatureVector {
  std::array<float, kCepstrumDim> cepstrum{};
  float pitch = 0.0f;
  float voicing = 0.0f;

  float operator[](int i) const {
    if (i < kCepstrumDim) return cepstrum[i];
    return i == kCepstrumDim ? pitch : voicing;
  }

  bool operator==(const FeatureVector&) const = default;
};

// Frames at a fixed 10-ms interval.
struct FeatureSequence {
  std::vector<FeatureVector> frames;

  std::size_t size() const { return frames.size(); }
  bool operator==(const FeatureSequence&) const = default;
};

// Pitch is stored as log2 of the frequency in Hz, spanning 62.5-500 Hz.
inline constexpr float kPitchLogMin = 5.9657843f;   // log2(62.5)
inline constexpr float kPitchLogMax = 8.9657843f;   // log2(500)

// Deterministic synthetic stand-in for real speech features: smooth
// slowly-varying cepstra with per-dimension amplitudes decaying from +-3.5,
// a bounded random-walk pitch, and voicing alternating between high and low
// segments of 10-50 frames.  n_frames must be even and >= 2.
FeatureSequence gen_synthetic_features(std::uint64_t seed, int n_frames);

// Binary feature file ("DREDFEAT"): bit-exact round trip.
void write_features(const std::filesystem::path& path, const FeatureSequence& seq);
FeatureSequence read_features(const std::filesystem::path& path);

}  // namespace dred

#endif  // DRED_FEATURES_HPP
