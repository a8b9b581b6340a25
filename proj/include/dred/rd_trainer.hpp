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

#ifndef DRED_RD_TRAINER_HPP
#define DRED_RD_TRAINER_HPP

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dred/features.hpp"
#include "dred/latent_codec.hpp"

namespace dred {

struct TrainConfig {
  // Rate-control grid, strictly increasing, log-spaced by default so the
  // trained rates span roughly 8-80 bits per latent vector.
  std::array<double, kNumLambda> lambda_grid{};
  double soft_hard_mix = 0.5;  // weight of the soft distortion in [0, 1]
  int steps = 24000;
  double learning_rate = 0.01;
  double grad_clip = 10.0;
  int slices_per_sequence = 4;
  int base_sequence_frames = 400;  // 4 s
  // Encode length doubles every quarter of training while slices keep a
  // one-second average decode duration.
  bool lengthen_schedule = true;
  int holdout_sequences = 16;
  std::uint64_t seed = 1234;

  TrainConfig();
};

struct RDPoint {
  int lambda_index = 0;
  double mean_rate_bits = 0.0;   // hard-path latent bits per vector
  double mean_distortion = 0.0;  // per-frame feature distortion
  int nondegenerate_dims = 0;
};

struct TrainResult {
  QuantizerTable table;
  std::vector<RDPoint> rd_points;
  std::vector<std::string> log_lines;  // JSON-lines eval records
};

// Feature-domain distortion: mean over frames of
//   ||c~ - c||^2 + w_p |p - p~| + |v - v~|^2,  w_p = 10 v^2
// with v the ground-truth voicing.  Throws on length mismatch.
double distortion(const FeatureSequence& x, const FeatureSequence& x_hat);

// One-lambda objective: (w D_soft + (1-w) D_hard) / sqrt(lambda)
//                       + sqrt(lambda) * sum(rates_soft).
double rd_loss(double dist_soft, double dist_hard,
               std::span<const double> rates_soft, double lambda, double mix);

// Gradient-descent optimization of the per-lambda quantizer tables on a
// synthetic corpus.  Requires >= 100 sequences of >= base_sequence_frames
// frames.  Returns the trained table plus one held-out RD point per lambda.
TrainResult train_tables(const TrainConfig& config,
                         const std::vector<FeatureSequence>& corpus,
                         const ReferenceTransform& transform);

// Held-out RD measurement for an arbitrary table (also used by the CLI).
std::vector<RDPoint> evaluate_rd(const QuantizerTable& table,
                                 const ReferenceTransform& transform,
                                 const std::vector<FeatureSequence>& probe,
                                 double nondegenerate_threshold = 0.01);

// A dimension is degenerate when its hard-path empirical rate on the probe
// falls below the threshold (collapsed dimensions cost exactly 0 bits).
std::vector<int> count_nondegenerate(const QuantizerTable& table,
                                     const ReferenceTransform& transform,
                                     const std::vector<FeatureSequence>& probe,
                                     double threshold = 0.01);

struct GradCheckReport {
  double max_rel_error_pointwise = 0.0;  // quantizer/rate chain alone
  double max_rel_error_full = 0.0;       // full slice loss incl. decoder
  int points = 0;

  double max_rel_error() const {
    return max_rel_error_pointwise > max_rel_error_full
               ? max_rel_error_pointwise
               : max_rel_error_full;
  }
};

// Compares the trainer's analytic gradients against central finite
// differences at randomized points.
GradCheckReport grad_check(std::uint64_t seed = 7, int points = 100);

}  // namespace dred

#endif  // DRED_RD_TRAINER_HPP
