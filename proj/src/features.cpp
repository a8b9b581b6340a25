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

#include "dred/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "dred/errors.hpp"
#include "dred/rng.hpp"

namespace dred {

namespace {

constexpr char kMagic[8] = {'D', 'R', 'E', 'D', 'F', 'E', 'A', 'T'};
constexpr std::uint16_t kVersion = 1;

float clampf(float v, float lo, float hi) { return std::min(hi, std::max(lo, v)); }

void put_u16(std::ofstream& out, std::uint16_t v) {
  const std::uint8_t b[2] = {static_cast<std::uint8_t>(v & 0xFF),
                             static_cast<std::uint8_t>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ofstream& out, std::uint32_t v) {
  std::uint8_t b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ofstream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

bool get_u16(std::ifstream& in, std::uint16_t& v) {
  std::uint8_t b[2];
  if (!in.read(reinterpret_cast<char*>(b), 2)) return false;
  v = static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  return true;
}

bool get_u32(std::ifstream& in, std::uint32_t& v) {
  std::uint8_t b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return true;
}

bool get_f32(std::ifstream& in, float& v) {
  std::uint32_t bits;
  if (!get_u32(in, bits)) return false;
  std::memcpy(&v, &bits, 4);
  return true;
}

}  // namespace

FeatureSequence gen_synthetic_features(std::uint64_t seed, int n_frames) {
  if (n_frames < 2 || n_frames % 2 != 0) {
    throw std::invalid_argument("n_frames must be even and >= 2");
  }

  Rng rng(seed ^ 0x5D2ED0FEA7ULL);
  FeatureSequence seq;
  seq.frames.resize(n_frames);

  // Cepstrum: per dimension, a sum of three low-frequency sinusoids with
  // decaying amplitude so the latent space sees a wide variance spread.
  struct Sine {
    double amp, freq_hz, phase;
  };
  std::array<std::array<Sine, 3>, kCepstrumDim> waves;
  for (int d = 0; d < kCepstrumDim; ++d) {
    const double amp = 3.5 * std::exp(-d / 6.0);
    for (auto& w : waves[d]) {
      w.amp = amp * rng.uniform(0.3, 1.0);
      w.freq_hz = rng.uniform(0.1, 2.0);
      w.phase = rng.uniform(0.0, 6.28318530717958647692);
    }
  }

  double pitch = rng.uniform(kPitchLogMin + 0.5, kPitchLogMax - 0.5);

  // Voicing schedule: alternating high/low segments of 10-50 frames.
  bool voiced = rng.uniform() < 0.5;
  int seg_left = static_cast<int>(rng.uniform_int(10, 50));
  double voicing_base = voiced ? rng.uniform(0.75, 0.95) : rng.uniform(0.0, 0.15);

  for (int t = 0; t < n_frames; ++t) {
    FeatureVector& f = seq.frames[t];
    const double time_s = t * 0.010;
    for (int d = 0; d < kCepstrumDim; ++d) {
      double v = 0.0;
      for (const auto& w : waves[d]) {
        v += w.amp * std::sin(6.28318530717958647692 * w.freq_hz * time_s + w.phase);
      }
      v += 0.02 * rng.normal();
      f.cepstrum[d] = clampf(static_cast<float>(v), -4.0f, 4.0f);
    }

    pitch += 0.02 * rng.normal();
    pitch = std::min<double>(kPitchLogMax, std::max<double>(kPitchLogMin, pitch));
    f.pitch = static_cast<float>(pitch);

    if (seg_left == 0) {
      voiced = !voiced;
      seg_left = static_cast<int>(rng.uniform_int(10, 50));
      voicing_base = voiced ? rng.uniform(0.75, 0.95) : rng.uniform(0.0, 0.15);
    }
    --seg_left;
    const double v = voicing_base + 0.01 * rng.normal();
    f.voicing = clampf(static_cast<float>(v), -1.0f, 1.0f);
  }
  return seq;
}

void write_features(const std::filesystem::path& path, const FeatureSequence& seq) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put_u16(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(seq.frames.size()));
  for (const FeatureVector& f : seq.frames) {
    for (float c : f.cepstrum) put_f32(out, c);
    put_f32(out, f.pitch);
    put_f32(out, f.voicing);
  }
  if (!out) throw FormatError("write failed: " + path.string());
}

FeatureSequence read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open for reading: " + path.string());

  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw FormatError("bad feature file magic: " + path.string());
  }
  std::uint16_t version;
  std::uint32_t count;
  if (!get_u16(in, version) || version != kVersion) {
    throw FormatError("unsupported feature file version: " + path.string());
  }
  if (!get_u32(in, count)) {
    throw FormatError("truncated feature file header: " + path.string());
  }

  FeatureSequence seq;
  seq.frames.resize(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    FeatureVector& f = seq.frames[t];
    for (int d = 0; d < kCepstrumDim; ++d) {
      if (!get_f32(in, f.cepstrum[d])) throw FormatError("truncated feature file body");
    }
    if (!get_f32(in, f.pitch) || !get_f32(in, f.voicing)) {
      throw FormatError("truncated feature file body");
    }
  }
  return seq;
}

}  // namespace dred
