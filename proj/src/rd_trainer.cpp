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

#include "dred/rd_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "dred/laplace.hpp"
#include "dred/rng.hpp"

namespace dred {

namespace {

constexpr int kF = kFeatureDim;
constexpr double kLn2 = 0.69314718055994530942;

struct PDim {
  double q = 1.0, delta = 0.25, theta = 0.5, rs = 0.5, rh = 0.5;
};

struct LambdaParams {
  std::vector<PDim> lat;
  std::vector<PDim> is;
};

using LambdaGrads = LambdaParams;  // same shape, used as accumulators

void zero_grads(LambdaGrads& g, std::size_t lat_n, std::size_t is_n) {
  g.lat.assign(lat_n, PDim{0, 0, 0, 0, 0});
  g.is.assign(is_n, PDim{0, 0, 0, 0, 0});
}

// y = M x
void matvec(const std::vector<double>& m, std::size_t rows, std::size_t cols,
            const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = m.data() + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

// y += M^T x
void matvec_t_acc(const std::vector<double>& m, std::size_t rows, std::size_t cols,
                  const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = m.data() + r * cols;
    const double xr = x[r];
    for (std::size_t c = 0; c < cols; ++c) y[c] += row[c] * xr;
  }
}

double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Per-dimension quantizer chain evaluated at one latent component.
struct DimFwd {
  double y = 0.0;            // q * z
  double zeta = 0.0;         // soft dead zone of y
  double dzeta_dy = 0.0;
  double dzeta_ddelta = 0.0;
  double soft = 0.0;         // zeta / q
  long sym = 0;              // round(zeta)
  double hard = 0.0;         // sym / q
  double rate_soft = 0.0;    // rate_bits(|zeta|, rs)
  double hard_bits = 0.0;    // -log2 P(sym; rh, theta)
};

double hard_code_bits(long sym, double rh, double theta) {
  if (rh < kDegenerateR) return 0.0;
  if (sym == 0) {
    return -std::log2(1.0 - std::pow(rh, theta));
  }
  return -(std::log(0.5 * (1.0 - rh)) +
           (std::abs(static_cast<double>(sym)) + theta - 1.0) * std::log(rh)) /
         kLn2;
}

// d/d(rh) and d/d(theta) of hard_code_bits at fixed symbol.
void hard_code_bits_grad(long sym, double rh, double theta, double* d_rh,
                         double* d_theta) {
  *d_rh = 0.0;
  *d_theta = 0.0;
  if (rh < kDegenerateR) return;
  if (sym == 0) {
    const double rth = std::pow(rh, theta);
    const double denom = (1.0 - rth) * kLn2;
    *d_rh = theta * std::pow(rh, theta - 1.0) / denom;
    *d_theta = rth * std::log(rh) / denom;
  } else {
    *d_rh = (1.0 / (1.0 - rh) -
             (std::abs(static_cast<double>(sym)) + theta - 1.0) / rh) /
            kLn2;
    *d_theta = -std::log(rh) / kLn2;
  }
}

DimFwd dim_forward(double z, const PDim& p, bool with_hard) {
  DimFwd f;
  f.y = p.q * z;
  f.zeta = soft_deadzone(f.y, p.delta);
  f.dzeta_dy = soft_deadzone_grad(f.y, p.delta);
  f.dzeta_ddelta = soft_deadzone_dwidth(f.y, p.delta);
  f.soft = f.zeta / p.q;
  f.rate_soft = rate_bits(std::abs(f.zeta), p.rs);
  if (with_hard) {
    f.sym = std::clamp<long>(std::lround(f.zeta), -255, 255);
    f.hard = static_cast<double>(f.sym) / p.q;
    f.hard_bits = hard_code_bits(f.sym, p.rh, p.theta);
  }
  return f;
}

double frame_distortion(const FeatureVector& truth, const FeatureVector& rec) {
  double d = 0.0;
  for (int i = 0; i < kCepstrumDim; ++i) {
    const double e = static_cast<double>(rec.cepstrum[i]) - truth.cepstrum[i];
    d += e * e;
  }
  const double wp = 10.0 * static_cast<double>(truth.voicing) * truth.voicing;
  d += wp * std::abs(static_cast<double>(rec.pitch) - truth.pitch);
  const double ev = static_cast<double>(rec.voicing) - truth.voicing;
  d += ev * ev;
  return d;
}

// Same distortion evaluated on a raw 20-wide double row (training path).
double row_distortion(const FeatureVector& truth, const double* rec) {
  double d = 0.0;
  for (int i = 0; i < kCepstrumDim; ++i) {
    const double e = rec[i] - truth.cepstrum[i];
    d += e * e;
  }
  const double wp = 10.0 * static_cast<double>(truth.voicing) * truth.voicing;
  d += wp * std::abs(rec[kCepstrumDim] - truth.pitch);
  const double ev = rec[kCepstrumDim + 1] - truth.voicing;
  d += ev * ev;
  return d;
}

void row_distortion_grad(const FeatureVector& truth, const double* rec,
                         double scale, double* drec) {
  for (int i = 0; i < kCepstrumDim; ++i) {
    drec[i] = scale * 2.0 * (rec[i] - truth.cepstrum[i]);
  }
  const double wp = 10.0 * static_cast<double>(truth.voicing) * truth.voicing;
  drec[kCepstrumDim] = scale * wp * sign0(rec[kCepstrumDim] - truth.pitch);
  const double ev = rec[kCepstrumDim + 1] - truth.voicing;
  drec[kCepstrumDim + 1] = scale * 2.0 * ev;
}

// One decode segment: encoder latents (newest-first), the matching initial
// state, and the ground-truth frames for the covered span (null where the
// span reaches before the start of the sequence).
struct SliceData {
  std::vector<std::vector<double>> z;       // m x M, newest-first
  std::vector<double> is;                    // S
  std::vector<const FeatureVector*> truth;   // m * frames_per_latent, chronological
};

// Backward decode in doubles with gradient accumulation.  Returns the mean
// per-frame distortion over available truth frames; fills d(D)/d(latent)
// and d(D)/d(initial state) when requested.
double decode_distortion(const std::vector<std::vector<double>>& deq,
                         const std::vector<double>& is_deq, const SliceData& s,
                         const ReferenceTransform& t,
                         std::vector<std::vector<double>>* dz,
                         std::vector<double>* dis) {
  const std::size_t S = static_cast<std::size_t>(t.state_dim());
  const std::size_t M = static_cast<std::size_t>(t.latent_dim());
  const int fpl = t.frames_per_latent();
  const int m = static_cast<int>(deq.size());
  const std::size_t out_rows = static_cast<std::size_t>(fpl) * kF;

  // Forward, storing the pre-update states g_0..g_m and block outputs.
  std::vector<std::vector<double>> g(m + 1);
  std::vector<std::vector<double>> out(m);
  g[0] = is_deq;
  int counted = 0;
  for (int j = 0; j < m; ++j) {
    out[j].resize(out_rows);
    matvec(t.dec_out_state(), out_rows, S, g[j].data(), out[j].data());
    std::vector<double> oz(out_rows);
    matvec(t.dec_out_latent(), out_rows, M, deq[j].data(), oz.data());
    for (std::size_t i = 0; i < out_rows; ++i) {
      out[j][i] += oz[i] + t.dec_out_bias()[i];
    }

    g[j + 1].resize(S);
    std::vector<double> pre(S);
    matvec(t.dec_in(), S, M, deq[j].data(), pre.data());
    std::vector<double> rec(S);
    matvec(t.dec_state(), S, S, g[j].data(), rec.data());
    for (std::size_t i = 0; i < S; ++i) g[j + 1][i] = std::tanh(pre[i] + rec[i]);
  }

  double dist = 0.0;
  for (int j = 0; j < m; ++j) {
    const std::size_t base = static_cast<std::size_t>(m - 1 - j) * fpl;
    for (int f = 0; f < fpl; ++f) {
      const FeatureVector* truth = s.truth[base + f];
      if (!truth) continue;
      dist += row_distortion(*truth, out[j].data() + f * kF);
      ++counted;
    }
  }
  if (dz) {
    dz->assign(m, std::vector<double>(M, 0.0));
    dis->assign(S, 0.0);
  }
  if (counted == 0) return 0.0;
  const double inv_count = 1.0 / counted;
  dist *= inv_count;

  if (!dz) return dist;

  std::vector<double> dg(S, 0.0);         // d(D)/d(g_{j+1}) carried backward
  std::vector<double> dout(out_rows);
  std::vector<double> drow(kF);
  for (int j = m - 1; j >= 0; --j) {
    // Through the state update g_{j+1} = tanh(P g_j + Q z_j).
    std::vector<double> du(S);
    for (std::size_t i = 0; i < S; ++i) {
      du[i] = dg[i] * (1.0 - g[j + 1][i] * g[j + 1][i]);
    }
    std::vector<double> dg_prev(S, 0.0);
    matvec_t_acc(t.dec_state(), S, S, du.data(), dg_prev.data());
    matvec_t_acc(t.dec_in(), S, M, du.data(), (*dz)[j].data());

    // Through the readout of block j.
    std::fill(dout.begin(), dout.end(), 0.0);
    const std::size_t base = static_cast<std::size_t>(m - 1 - j) * fpl;
    for (int f = 0; f < fpl; ++f) {
      const FeatureVector* truth = s.truth[base + f];
      if (!truth) continue;
      row_distortion_grad(*truth, out[j].data() + f * kF, inv_count, drow.data());
      for (int i = 0; i < kF; ++i) dout[f * kF + i] = drow[i];
    }
    matvec_t_acc(t.dec_out_state(), out_rows, S, dout.data(), dg_prev.data());
    matvec_t_acc(t.dec_out_latent(), out_rows, M, dout.data(), (*dz)[j].data());

    dg = std::move(dg_prev);
  }
  for (std::size_t i = 0; i < S; ++i) (*dis)[i] = dg[i];
  return dist;
}

// Full objective for one slice at one lambda.  include_hard toggles the
// straight-through hard-distortion term and the (r_hard, theta) code-length
// fit; with it off the loss is the fully differentiable soft objective used
// by the gradient check.
double slice_loss(const SliceData& s, const LambdaParams& p, double lambda,
                  double mix, bool include_hard, const ReferenceTransform& t,
                  LambdaGrads* grads) {
  const std::size_t M = static_cast<std::size_t>(t.latent_dim());
  const std::size_t S = static_cast<std::size_t>(t.state_dim());
  const int m = static_cast<int>(s.z.size());
  const double sqrt_l = std::sqrt(lambda);
  const double inv_m = 1.0 / m;

  std::vector<std::vector<DimFwd>> lf(m, std::vector<DimFwd>(M));
  std::vector<DimFwd> isf(S);

  std::vector<std::vector<double>> soft_deq(m, std::vector<double>(M));
  std::vector<std::vector<double>> hard_deq;
  std::vector<double> soft_is(S), hard_is;

  double rate_soft = 0.0, rate_hard = 0.0;
  for (int j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < M; ++i) {
      lf[j][i] = dim_forward(s.z[j][i], p.lat[i], include_hard);
      soft_deq[j][i] = lf[j][i].soft;
      rate_soft += lf[j][i].rate_soft;
      rate_hard += lf[j][i].hard_bits;
    }
  }
  for (std::size_t i = 0; i < S; ++i) {
    isf[i] = dim_forward(s.is[i], p.is[i], include_hard);
    soft_is[i] = isf[i].soft;
    rate_soft += isf[i].rate_soft;
    rate_hard += isf[i].hard_bits;
  }
  rate_soft *= inv_m;  // bits per latent vector, IS amortized over the slice
  rate_hard *= inv_m;

  std::vector<std::vector<double>> dz_soft, dz_hard;
  std::vector<double> dis_soft, dis_hard;
  const double d_soft =
      decode_distortion(soft_deq, soft_is, s, t, grads ? &dz_soft : nullptr,
                        grads ? &dis_soft : nullptr);

  double d_hard = 0.0;
  if (include_hard) {
    hard_deq.assign(m, std::vector<double>(M));
    hard_is.resize(S);
    for (int j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < M; ++i) hard_deq[j][i] = lf[j][i].hard;
    }
    for (std::size_t i = 0; i < S; ++i) hard_is[i] = isf[i].hard;
    d_hard = decode_distortion(hard_deq, hard_is, s, t,
                               grads ? &dz_hard : nullptr,
                               grads ? &dis_hard : nullptr);
  }

  const double w = include_hard ? mix : 1.0;
  double loss = (w * d_soft + (1.0 - w) * d_hard) / sqrt_l + sqrt_l * rate_soft;
  if (include_hard) loss += sqrt_l * rate_hard;

  if (!grads) return loss;

  const double w_soft = w / sqrt_l;
  const double w_hard = (1.0 - w) / sqrt_l;
  const double w_rate = sqrt_l * inv_m;

  auto accumulate = [&](const DimFwd& f, double z, const PDim& pd,
                        double dsoft, double dhard, PDim& g) {
    const double q2 = pd.q * pd.q;
    // Soft dequantized value zeta/q.
    const double dzs_dq = (f.dzeta_dy * z * pd.q - f.zeta) / q2;
    const double dzs_dd = f.dzeta_ddelta / pd.q;
    g.q += w_soft * dsoft * dzs_dq;
    g.delta += w_soft * dsoft * dzs_dd;
    // Rate term through |zeta|.
    const double drate_dzeta = sign0(f.zeta) * (-std::log2(std::max(pd.rs, kDegenerateR)));
    if (pd.rs >= kDegenerateR) {
      g.q += w_rate * drate_dzeta * f.dzeta_dy * z;
      g.delta += w_rate * drate_dzeta * f.dzeta_ddelta;
      g.rs += w_rate * rate_bits_dr(std::abs(f.zeta), pd.rs);
    }
    if (include_hard) {
      // Straight-through on the rounding only: d(sym) := d(zeta).
      const double dzh_dq = (f.dzeta_dy * z * pd.q - static_cast<double>(f.sym)) / q2;
      const double dzh_dd = f.dzeta_ddelta / pd.q;
      g.q += w_hard * dhard * dzh_dq;
      g.delta += w_hard * dhard * dzh_dd;
      double d_rh, d_theta;
      hard_code_bits_grad(f.sym, pd.rh, pd.theta, &d_rh, &d_theta);
      g.rh += w_rate * d_rh;
      g.theta += w_rate * d_theta;
    }
  };

  for (int j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < M; ++i) {
      accumulate(lf[j][i], s.z[j][i], p.lat[i], dz_soft[j][i],
                 include_hard ? dz_hard[j][i] : 0.0, grads->lat[i]);
    }
  }
  for (std::size_t i = 0; i < S; ++i) {
    accumulate(isf[i], s.is[i], p.is[i], dis_soft[i],
               include_hard ? dis_hard[i] : 0.0, grads->is[i]);
  }
  return loss;
}

// Builds the decode segment [a, b) (encoder step indices) of a sequence.
SliceData make_slice(const std::vector<std::vector<double>>& latents,
                     const std::vector<std::vector<double>>& states,
                     const FeatureSequence& features, int a, int b,
                     const ReferenceTransform& t) {
  const int stride = t.stride();
  const int fpl = t.frames_per_latent();
  const int newest = b - 1;
  const int m = (newest - a) / stride + 1;

  SliceData s;
  s.z.reserve(m);
  for (int j = 0; j < m; ++j) s.z.push_back(latents[newest - j * stride]);
  s.is = states[newest];
  s.truth.assign(static_cast<std::size_t>(m) * fpl, nullptr);
  const int oldest = newest - (m - 1) * stride;
  const int first_frame = 2 * oldest - (fpl - 2);
  for (int c = 0; c < m * fpl; ++c) {
    const int frame = first_frame + c;
    if (frame >= 0 && frame < static_cast<int>(features.size())) {
      s.truth[c] = &features.frames[frame];
    }
  }
  return s;
}

LambdaParams params_from_dimquant(const QuantizerTable& t, int l) {
  LambdaParams p;
  p.lat.resize(t.latent_dim);
  p.is.resize(t.is_dim);
  for (int i = 0; i < t.latent_dim; ++i) {
    const DimQuant& d = t.latent_at(l, i);
    p.lat[i] = {d.scale, d.delta, d.theta, d.r_soft, d.r_hard};
  }
  for (int i = 0; i < t.is_dim; ++i) {
    const DimQuant& d = t.is_at(l, i);
    p.is[i] = {d.scale, d.delta, d.theta, d.r_soft, d.r_hard};
  }
  return p;
}

void clamp_params(LambdaParams& p) {
  auto clamp_dim = [](PDim& d) {
    d.q = std::clamp(d.q, 1e-6, 64.0);
    d.delta = std::clamp(d.delta, 0.0, 2.0);
    d.theta = std::clamp(d.theta, 0.5, 8.0);
    d.rs = std::clamp(d.rs, 1e-9, 0.999);
    d.rh = std::clamp(d.rh, 1e-9, 0.999);
  };
  for (auto& d : p.lat) clamp_dim(d);
  for (auto& d : p.is) clamp_dim(d);
}

}  // namespace

TrainConfig::TrainConfig() {
  for (int l = 0; l < kNumLambda; ++l) {
    const double frac = static_cast<double>(l) / (kNumLambda - 1);
    lambda_grid[l] = 0.01 * std::pow(1000.0, frac);
  }
}

double distortion(const FeatureSequence& x, const FeatureSequence& x_hat) {
  if (x.size() != x_hat.size()) {
    throw std::invalid_argument("distortion: length mismatch");
  }
  if (x.size() == 0) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    acc += frame_distortion(x.frames[i], x_hat.frames[i]);
  }
  return acc / static_cast<double>(x.size());
}

double rd_loss(double dist_soft, double dist_hard,
               std::span<const double> rates_soft, double lambda, double mix) {
  if (lambda <= 0.0) throw std::invalid_argument("lambda must be positive");
  double rate = 0.0;
  for (double r : rates_soft) rate += r;
  const double sqrt_l = std::sqrt(lambda);
  return (mix * dist_soft + (1.0 - mix) * dist_hard) / sqrt_l + sqrt_l * rate;
}

TrainResult train_tables(const TrainConfig& config,
                         const std::vector<FeatureSequence>& corpus,
                         const ReferenceTransform& transform) {
  if (static_cast<int>(corpus.size()) < 100) {
    throw std::invalid_argument("training corpus needs >= 100 sequences");
  }
  for (const auto& seq : corpus) {
    if (static_cast<int>(seq.size()) < config.base_sequence_frames ||
        seq.size() % 2 != 0) {
      throw std::invalid_argument("corpus sequences must be even and >= base length");
    }
  }
  for (int l = 1; l < kNumLambda; ++l) {
    if (!(config.lambda_grid[l] > config.lambda_grid[l - 1])) {
      throw std::invalid_argument("lambda grid must be strictly increasing");
    }
  }

  const int holdout = std::min<int>(config.holdout_sequences,
                                    static_cast<int>(corpus.size()) / 4);
  const int n_train = static_cast<int>(corpus.size()) - holdout;

  // Warm start from the measured-spread heuristic table.
  QuantizerTable init = make_heuristic_table(transform, corpus.front());
  std::array<LambdaParams, kNumLambda> params;
  for (int l = 0; l < kNumLambda; ++l) params[l] = params_from_dimquant(init, l);

  Rng rng(config.seed);
  const int stride = transform.stride();

  for (int step = 0; step < config.steps; ++step) {
    const int quarter =
        config.lengthen_schedule ? std::min<int>(3, 4 * step / config.steps) : 0;
    const int n_concat = 1 << quarter;
    const int lambda_index = static_cast<int>(rng.uniform_int(0, kNumLambda - 1));
    const double lambda = config.lambda_grid[lambda_index];

    // Encode a (possibly concatenated) training sequence.
    StreamEncoder enc(transform);
    const FeatureSequence* first = nullptr;
    std::vector<const FeatureSequence*> parts;
    for (int c = 0; c < n_concat; ++c) {
      const auto& seq = corpus[static_cast<std::size_t>(rng.uniform_int(0, n_train - 1))];
      if (!first) first = &seq;
      parts.push_back(&seq);
      enc.push_sequence(seq);
    }
    FeatureSequence concat;
    if (parts.size() == 1) {
      concat = *parts[0];
    } else {
      for (const auto* p : parts) {
        concat.frames.insert(concat.frames.end(), p->frames.begin(), p->frames.end());
      }
    }

    const int n_lat = enc.steps();
    std::vector<std::vector<double>> latents(n_lat), states(n_lat);
    for (int t = 0; t < n_lat; ++t) {
      latents[t] = enc.latent(t);
      states[t] = enc.initial_state(t);
    }

    // Random non-overlapping decode segments with jittered boundaries.
    const int n_slices = config.slices_per_sequence * n_concat;
    std::vector<int> bounds(n_slices + 1);
    bounds[0] = 0;
    bounds[n_slices] = n_lat;
    const double base_len = static_cast<double>(n_lat) / n_slices;
    for (int k = 1; k < n_slices; ++k) {
      const int jitter = static_cast<int>(rng.uniform_int(
          -static_cast<int>(base_len / 3), static_cast<int>(base_len / 3)));
      const int lo = bounds[k - 1] + stride;
      const int hi = std::max(lo, n_lat - (n_slices - k) * stride);
      bounds[k] = std::clamp<int>(static_cast<int>(k * base_len) + jitter, lo, hi);
    }

    LambdaGrads grads;
    zero_grads(grads, params[lambda_index].lat.size(), params[lambda_index].is.size());
    LambdaGrads slice_grads;
    for (int k = 0; k < n_slices; ++k) {
      zero_grads(slice_grads, grads.lat.size(), grads.is.size());
      const SliceData s = make_slice(latents, states, concat, bounds[k],
                                     bounds[k + 1], transform);
      slice_loss(s, params[lambda_index], lambda, config.soft_hard_mix, true,
                 transform, &slice_grads);
      for (std::size_t i = 0; i < grads.lat.size(); ++i) {
        grads.lat[i].q += slice_grads.lat[i].q / n_slices;
        grads.lat[i].delta += slice_grads.lat[i].delta / n_slices;
        grads.lat[i].theta += slice_grads.lat[i].theta / n_slices;
        grads.lat[i].rs += slice_grads.lat[i].rs / n_slices;
        grads.lat[i].rh += slice_grads.lat[i].rh / n_slices;
      }
      for (std::size_t i = 0; i < grads.is.size(); ++i) {
        grads.is[i].q += slice_grads.is[i].q / n_slices;
        grads.is[i].delta += slice_grads.is[i].delta / n_slices;
        grads.is[i].theta += slice_grads.is[i].theta / n_slices;
        grads.is[i].rs += slice_grads.is[i].rs / n_slices;
        grads.is[i].rh += slice_grads.is[i].rh / n_slices;
      }
    }

    auto apply = [&](PDim& p, const PDim& g) {
      auto clip = [&](double v) {
        return std::clamp(v, -config.grad_clip, config.grad_clip);
      };
      p.q -= config.learning_rate * clip(g.q);
      p.delta -= config.learning_rate * clip(g.delta);
      p.theta -= config.learning_rate * clip(g.theta);
      p.rs -= config.learning_rate * clip(g.rs);
      p.rh -= config.learning_rate * clip(g.rh);
    };
    for (std::size_t i = 0; i < grads.lat.size(); ++i) {
      apply(params[lambda_index].lat[i], grads.lat[i]);
    }
    for (std::size_t i = 0; i < grads.is.size(); ++i) {
      apply(params[lambda_index].is[i], grads.is[i]);
    }
    clamp_params(params[lambda_index]);
  }

  TrainResult result;
  result.table.latent_dim = transform.latent_dim();
  result.table.is_dim = transform.state_dim();
  result.table.lambda_values.resize(kNumLambda);
  result.table.latent.resize(static_cast<std::size_t>(kNumLambda) * transform.latent_dim());
  result.table.is.resize(static_cast<std::size_t>(kNumLambda) * transform.state_dim());
  for (int l = 0; l < kNumLambda; ++l) {
    result.table.lambda_values[l] = static_cast<float>(config.lambda_grid[l]);
    for (int i = 0; i < transform.latent_dim(); ++i) {
      const PDim& p = params[l].lat[i];
      result.table.latent_at(l, i) = {
          static_cast<float>(p.q), static_cast<float>(p.rs),
          static_cast<float>(p.rh), static_cast<float>(p.delta),
          static_cast<float>(p.theta)};
    }
    for (int i = 0; i < transform.state_dim(); ++i) {
      const PDim& p = params[l].is[i];
      result.table.is_at(l, i) = {
          static_cast<float>(p.q), static_cast<float>(p.rs),
          static_cast<float>(p.rh), static_cast<float>(p.delta),
          static_cast<float>(p.theta)};
    }
  }

  std::vector<FeatureSequence> probe(corpus.end() - holdout, corpus.end());
  result.rd_points = evaluate_rd(result.table, transform, probe);
  for (const RDPoint& pt : result.rd_points) {
    nlohmann::json rec = {{"lambda_index", pt.lambda_index},
                          {"rate_bits_per_vector", pt.mean_rate_bits},
                          {"distortion", pt.mean_distortion},
                          {"nondegenerate_dims", pt.nondegenerate_dims}};
    result.log_lines.push_back(rec.dump());
  }
  return result;
}

namespace {

// Shared hard-path measurement: per-lambda RD means plus per-dimension
// empirical bits for the degeneracy count.
struct RdMeasurement {
  std::vector<RDPoint> points;
  std::vector<std::vector<double>> dim_bits;  // [lambda][latent dim]
};

RdMeasurement measure_rd(const QuantizerTable& table,
                         const ReferenceTransform& transform,
                         const std::vector<FeatureSequence>& probe,
                         double threshold) {
  const int stride = transform.stride();
  const int steps_per_segment = 50;  // one-second decode windows

  RdMeasurement out;
  out.points.resize(kNumLambda);
  out.dim_bits.assign(kNumLambda, std::vector<double>(table.latent_dim, 0.0));

  for (int l = 0; l < kNumLambda; ++l) {
    double rate_acc = 0.0;
    long n_latents = 0;
    double dist_acc = 0.0;
    long n_frames = 0;

    for (const FeatureSequence& seq : probe) {
      const auto [latents, states] = encode_stream(seq, transform);
      const int n_steps = static_cast<int>(latents.size());
      for (int start = 0; start + steps_per_segment <= n_steps;
           start += steps_per_segment) {
        const int newest = start + steps_per_segment - 1;
        const int m = (newest - start) / stride + 1;

        std::vector<std::vector<double>> deq;
        deq.reserve(m);
        for (int j = 0; j < m; ++j) {
          const auto& z = latents[newest - j * stride].values;
          QuantizedLatent quant = quantize_latent(z, table, l);
          for (int i = 0; i < table.latent_dim; ++i) {
            const DimQuant& d = table.latent_at(l, i);
            if (d.scale < kDegenerateScale) continue;
            const LaplaceParams cp = coding_params(d);
            const double bits = hard_code_bits(quant.symbols[i], cp.r, cp.theta);
            rate_acc += bits;
            out.dim_bits[l][i] += bits;
          }
          ++n_latents;
          deq.push_back(std::move(quant.dequantized));
        }

        QuantizedLatent is_q = quantize_is(states[newest].values, table, l);
        const FeatureSequence rec =
            decode_packet_latents(deq, is_q.dequantized, transform);

        const int oldest = newest - (m - 1) * stride;
        const int first_frame = 2 * oldest - (transform.frames_per_latent() - 2);
        for (std::size_t c = 0; c < rec.size(); ++c) {
          const int frame = first_frame + static_cast<int>(c);
          if (frame < 0 || frame >= static_cast<int>(seq.size())) continue;
          dist_acc += frame_distortion(seq.frames[frame], rec.frames[c]);
          ++n_frames;
        }
      }
    }

    RDPoint& pt = out.points[l];
    pt.lambda_index = l;
    pt.mean_rate_bits = n_latents ? rate_acc / n_latents : 0.0;
    pt.mean_distortion = n_frames ? dist_acc / n_frames : 0.0;
    int live = 0;
    for (int i = 0; i < table.latent_dim; ++i) {
      out.dim_bits[l][i] = n_latents ? out.dim_bits[l][i] / n_latents : 0.0;
      if (out.dim_bits[l][i] >= threshold) ++live;
    }
    pt.nondegenerate_dims = live;
  }
  return out;
}

}  // namespace

std::vector<RDPoint> evaluate_rd(const QuantizerTable& table,
                                 const ReferenceTransform& transform,
                                 const std::vector<FeatureSequence>& probe,
                                 double nondegenerate_threshold) {
  return measure_rd(table, transform, probe, nondegenerate_threshold).points;
}

std::vector<int> count_nondegenerate(const QuantizerTable& table,
                                     const ReferenceTransform& transform,
                                     const std::vector<FeatureSequence>& probe,
                                     double threshold) {
  const RdMeasurement m = measure_rd(table, transform, probe, threshold);
  std::vector<int> counts(kNumLambda);
  for (int l = 0; l < kNumLambda; ++l) counts[l] = m.points[l].nondegenerate_dims;
  return counts;
}

GradCheckReport grad_check(std::uint64_t seed, int points) {
  GradCheckReport report;
  report.points = points;
  Rng rng(seed);

  auto rel_err = [](double a, double b) {
    const double mag = std::max({std::abs(a), std::abs(b)});
    if (mag < 1e-7) return std::abs(a - b);  // both effectively zero
    return std::abs(a - b) / mag;
  };

  // Pointwise: the scalar soft chain
  //   f = sqrt(lambda) * rate_bits(|zeta(q z)|, rs) + (zeta(q z)/q - z)^2.
  for (int n = 0; n < points; ++n) {
    double z, q, delta, rs, lambda;
    DimFwd f;
    do {
      z = rng.uniform(-4.0, 4.0);
      q = rng.uniform(0.05, 6.0);
      delta = rng.uniform(0.0, 0.8);
      rs = rng.uniform(0.05, 0.99);
      lambda = rng.uniform(0.01, 10.0);
      PDim pd{q, delta, 0.5, rs, rs};
      f = dim_forward(z, pd, false);
    } while (std::abs(f.zeta) < 1e-2 || std::abs(z) < 1e-2);

    const double sqrt_l = std::sqrt(lambda);
    auto eval = [&](double zz, double qq, double dd, double rr) {
      const double zeta = soft_deadzone(qq * zz, dd);
      const double soft = zeta / qq;
      const double err = soft - z;  // target is the unperturbed z
      return sqrt_l * rate_bits(std::abs(zeta), rr) + err * err;
    };

    // Analytic partials of the same scalar.
    const double err = f.soft - z;
    const double drate_dzeta = sign0(f.zeta) * (-std::log2(rs));
    const double dzs_dq = (f.dzeta_dy * z * q - f.zeta) / (q * q);
    const double dzs_dd = f.dzeta_ddelta / q;
    const double an_q = sqrt_l * drate_dzeta * f.dzeta_dy * z + 2.0 * err * dzs_dq;
    const double an_d = sqrt_l * drate_dzeta * f.dzeta_ddelta + 2.0 * err * dzs_dd;
    const double an_r = sqrt_l * rate_bits_dr(std::abs(f.zeta), rs);
    // d/dz at fixed reconstruction target.
    const double an_z = sqrt_l * drate_dzeta * f.dzeta_dy * q + 2.0 * err * f.dzeta_dy;

    const double h = 1e-6;
    const double fd_q = (eval(z, q + h, delta, rs) - eval(z, q - h, delta, rs)) / (2 * h);
    const double fd_d = (eval(z, q, delta + h, rs) - eval(z, q, delta - h, rs)) / (2 * h);
    const double fd_r = (eval(z, q, delta, rs + h) - eval(z, q, delta, rs - h)) / (2 * h);
    const double fd_z = (eval(z + h, q, delta, rs) - eval(z - h, q, delta, rs)) / (2 * h);

    report.max_rel_error_pointwise = std::max(
        {report.max_rel_error_pointwise, rel_err(an_q, fd_q), rel_err(an_d, fd_d),
         rel_err(an_r, fd_r), rel_err(an_z, fd_z)});
  }

  // Full slice loss (soft objective) against finite differences on a small
  // transform, exercising the decoder backward pass.
  TransformConfig tc;
  tc.latent_dim = 12;
  tc.state_dim = 6;
  tc.seed = 0xFACE;
  const ReferenceTransform t(tc);

  const FeatureSequence seq = gen_synthetic_features(seed ^ 0x9E37, 48);
  const auto [latents, states] = encode_stream(seq, t);
  std::vector<std::vector<double>> lat_v, st_v;
  for (const auto& l : latents) lat_v.push_back(l.values);
  for (const auto& s : states) st_v.push_back(s.values);
  const SliceData s = make_slice(lat_v, st_v, seq, 0, static_cast<int>(lat_v.size()), t);

  LambdaParams p;
  p.lat.resize(tc.latent_dim);
  p.is.resize(tc.state_dim);
  for (auto& d : p.lat) {
    d = {rng.uniform(0.2, 3.0), rng.uniform(0.05, 0.6), 0.5,
         rng.uniform(0.2, 0.95), 0.5};
  }
  for (auto& d : p.is) {
    d = {rng.uniform(0.2, 3.0), rng.uniform(0.05, 0.6), 0.5,
         rng.uniform(0.2, 0.95), 0.5};
  }
  const double lambda = 0.7;

  LambdaGrads grads;
  zero_grads(grads, p.lat.size(), p.is.size());
  slice_loss(s, p, lambda, 1.0, false, t, &grads);

  auto fd_param = [&](double* slot) {
    const double h = 1e-5 * std::max(1.0, std::abs(*slot));
    const double orig = *slot;
    *slot = orig + h;
    const double up = slice_loss(s, p, lambda, 1.0, false, t, nullptr);
    *slot = orig - h;
    const double dn = slice_loss(s, p, lambda, 1.0, false, t, nullptr);
    *slot = orig;
    return (up - dn) / (2 * h);
  };

  for (int i = 0; i < tc.latent_dim; ++i) {
    report.max_rel_error_full =
        std::max({report.max_rel_error_full,
                  rel_err(grads.lat[i].q, fd_param(&p.lat[i].q)),
                  rel_err(grads.lat[i].delta, fd_param(&p.lat[i].delta)),
                  rel_err(grads.lat[i].rs, fd_param(&p.lat[i].rs))});
  }
  for (int i = 0; i < tc.state_dim; ++i) {
    report.max_rel_error_full =
        std::max({report.max_rel_error_full,
                  rel_err(grads.is[i].q, fd_param(&p.is[i].q)),
                  rel_err(grads.is[i].delta, fd_param(&p.is[i].delta)),
                  rel_err(grads.is[i].rs, fd_param(&p.is[i].rs))});
  }
  return report;
}

}  // namespace dred
