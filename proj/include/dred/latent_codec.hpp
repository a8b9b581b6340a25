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

#ifndef DRED_LATENT_CODEC_HPP
#define DRED_LATENT_CODEC_HPP

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "dred/features.hpp"
#include "dred/laplace.hpp"

namespace dred {

inline constexpr int kDefaultLatentDim = 80;
inline constexpr int kDefaultStateDim = 24;
inline constexpr int kNumLambda = 16;

struct TransformConfig {
  int latent_dim = kDefaultLatentDim;
  int state_dim = kDefaultStateDim;  // doubles as the IS dimension
  int stride = 2;                    // a latent reconstructs stride*2 frames
  std::uint64_t seed = 0xD2ED5EEDull;
};

// Deterministic seeded recurrent transform pair standing in for a trained
// encoder/decoder network.  The encoder runs forward over feature pairs
// (h = tanh(A h + B u), z = C h, s = D h); the decoder runs backward from
// an initial state, consuming one latent per step and emitting stride*2
// feature frames for each.  Recurrent matrices are random with spectral
// norm < 1 (fading memory); the decoder readout is fitted once at
// construction by closed-form ridge regression on a seeded calibration
// run, so decoding unquantized latents approximates the encoder input and
// quantization noise maps to reconstruction distortion.
class ReferenceTransform {
 public:
  explicit ReferenceTransform(const TransformConfig& config = {});

  int latent_dim() const { return cfg_.latent_dim; }
  int state_dim() const { return cfg_.state_dim; }
  int stride() const { return cfg_.stride; }
  int frames_per_latent() const { return 2 * cfg_.stride; }
  std::uint64_t seed() const { return cfg_.seed; }

  // Encoder step: updates h in place from two stacked feature frames and
  // writes the latent and initial-state outputs.
  void encoder_step(std::vector<double>& h, const FeatureVector& even,
                    const FeatureVector& odd, std::vector<double>& latent,
                    std::vector<double>& initial_state) const;

  // Decoder step: emits frames_per_latent() feature vectors (chronological
  // order within the block) for one latent, then updates the backward state.
  void decoder_step(std::vector<double>& g, const std::vector<double>& latent,
                    std::vector<FeatureVector>& block) const;

  // Decoder pieces exposed for the trainer's backward pass.
  const std::vector<double>& dec_state() const { return dec_state_; }
  const std::vector<double>& dec_in() const { return dec_in_; }
  const std::vector<double>& dec_out_state() const { return dec_out_state_; }
  const std::vector<double>& dec_out_latent() const { return dec_out_latent_; }
  const std::vector<double>& dec_out_bias() const { return dec_out_bias_; }
  const std::vector<double>& feature_mean() const { return mean_; }

 private:
  void fit_decoder_readout();

  TransformConfig cfg_;
  // Row-major matrices.
  std::vector<double> enc_state_;      // [S x S]
  std::vector<double> enc_in_;         // [S x 2F]
  std::vector<double> enc_latent_;     // [M x S]
  std::vector<double> enc_is_;         // [S x S]
  std::vector<double> dec_state_;      // [S x S]
  std::vector<double> dec_in_;         // [S x M]
  std::vector<double> dec_out_state_;  // [frames_per_latent*F x S]
  std::vector<double> dec_out_latent_; // [frames_per_latent*F x M]
  std::vector<double> dec_out_bias_;   // [frames_per_latent*F]
  std::vector<double> mean_;           // [F]
};

struct LatentVector {
  std::vector<double> values;
  int frame_index = 0;  // position on the 20-ms step grid
};

struct InitialState {
  std::vector<double> values;
  int frame_index = 0;
};

// Runs the encoder over a full sequence: one latent and one initial state
// per feature pair.  Throws std::invalid_argument on odd frame counts.
std::pair<std::vector<LatentVector>, std::vector<InitialState>> encode_stream(
    const FeatureSequence& features, const ReferenceTransform& transform);

// Incremental encoder holding its own history, used by the packet builder.
class StreamEncoder {
 public:
  explicit StreamEncoder(const ReferenceTransform& transform);

  void push_pair(const FeatureVector& even, const FeatureVector& odd);
  void push_sequence(const FeatureSequence& features);

  int steps() const { return static_cast<int>(latents_.size()); }
  const std::vector<double>& latent(int step) const { return latents_.at(step); }
  const std::vector<double>& initial_state(int step) const { return states_.at(step); }
  const ReferenceTransform& transform() const { return *transform_; }

 private:
  const ReferenceTransform* transform_;
  std::vector<double> h_;
  std::vector<std::vector<double>> latents_;
  std::vector<std::vector<double>> states_;
};

// Backward decode of one packet's worth of latents.  latents are the
// dequantized vectors ordered most-recent-first, spaced stride steps apart;
// the result covers frames_per_latent() * n frames in chronological order.
// Depends on nothing but its arguments.
FeatureSequence decode_packet_latents(
    const std::vector<std::vector<double>>& latents_newest_first,
    const std::vector<double>& initial_state,
    const ReferenceTransform& transform);

// Per-dimension quantizer entry: scale q, soft/hard Laplace decays, dead
// zone width and learned theta.
struct DimQuant {
  float scale = 1.0f;
  float r_soft = 0.5f;
  float r_hard = 0.5f;
  float delta = 0.25f;
  float theta = 0.5f;

  bool operator==(const DimQuant&) const = default;
};

// 16 rate operating points for latent dimensions plus a parallel table for
// initial-state dimensions.
struct QuantizerTable {
  std::vector<float> lambda_values;  // kNumLambda entries, increasing
  std::vector<DimQuant> latent;      // [kNumLambda x latent_dim]
  std::vector<DimQuant> is;          // [kNumLambda x is_dim]
  int latent_dim = 0;
  int is_dim = 0;

  DimQuant& latent_at(int lambda_index, int dim) {
    return latent[static_cast<std::size_t>(lambda_index) * latent_dim + dim];
  }
  const DimQuant& latent_at(int lambda_index, int dim) const {
    return latent[static_cast<std::size_t>(lambda_index) * latent_dim + dim];
  }
  DimQuant& is_at(int lambda_index, int dim) {
    return is[static_cast<std::size_t>(lambda_index) * is_dim + dim];
  }
  const DimQuant& is_at(int lambda_index, int dim) const {
    return is[static_cast<std::size_t>(lambda_index) * is_dim + dim];
  }

  bool operator==(const QuantizerTable&) const = default;
};

void save_table(const std::filesystem::path& path, const QuantizerTable& table);
QuantizerTable load_table(const std::filesystem::path& path);

// Untrained but usable table: scales chosen from measured latent spreads on
// a probe sequence, log-spaced across lambda indices from fine to coarse.
// The trainer uses the same construction as its starting point.
QuantizerTable make_heuristic_table(const ReferenceTransform& transform,
                                    const FeatureSequence& probe);

struct QuantizedLatent {
  std::vector<int> symbols;
  int lambda_index = 0;
  std::vector<double> dequantized;
};

LaplaceParams coding_params(const DimQuant& d);

QuantizedLatent quantize_latent(const std::vector<double>& latent,
                                const QuantizerTable& table, int lambda_index);
QuantizedLatent quantize_is(const std::vector<double>& initial_state,
                            const QuantizerTable& table, int lambda_index);

}  // namespace dred

#endif  // DRED_LATENT_CODEC_HPP
