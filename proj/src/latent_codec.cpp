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

#include "dred/latent_codec.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "dred/errors.hpp"
#include "dred/rng.hpp"

namespace dred {

namespace {

constexpr int kF = kFeatureDim;

void fill_gaussian(std::vector<double>& m, std::size_t rows, std::size_t cols,
                   double gain, Rng& rng) {
  m.resize(rows * cols);
  const double s = gain / std::sqrt(static_cast<double>(cols));
  for (auto& v : m) v = s * rng.normal();
}

// y = M x  (rows x cols, row-major)
void matvec(const std::vector<double>& m, std::size_t rows, std::size_t cols,
            const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = m.data() + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

// Largest singular value by power iteration on M^T M.
double spectral_norm(const std::vector<double>& m, std::size_t n) {
  std::vector<double> v(n, 1.0 / std::sqrt(static_cast<double>(n)));
  std::vector<double> mv(n), mtmv(n);
  double lambda = 0.0;
  for (int it = 0; it < 60; ++it) {
    matvec(m, n, n, v.data(), mv.data());
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t r = 0; r < n; ++r) acc += m[r * n + i] * mv[r];
      mtmv[i] = acc;
    }
    double norm = 0.0;
    for (double x : mtmv) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    lambda = norm;
    for (std::size_t i = 0; i < n; ++i) v[i] = mtmv[i] / norm;
  }
  return std::sqrt(lambda);
}

void rescale_to_norm(std::vector<double>& m, std::size_t n, double target) {
  const double norm = spectral_norm(m, n);
  if (norm > 0.0) {
    const double f = target / norm;
    for (auto& v : m) v *= f;
  }
}

// Solves A X = B for symmetric positive definite A (n x n, row-major) with
// nrhs right-hand sides stored row-major in B (n x nrhs).  In-place
// Cholesky; A and B are destroyed, the solution lands in B.
void cholesky_solve(std::vector<double>& a, int n, std::vector<double>& b, int nrhs) {
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double sum = a[static_cast<std::size_t>(i) * n + j];
      for (int k = 0; k < j; ++k) {
        sum -= a[static_cast<std::size_t>(i) * n + k] * a[static_cast<std::size_t>(j) * n + k];
      }
      if (i == j) {
        a[static_cast<std::size_t>(i) * n + j] = std::sqrt(std::max(sum, 1e-12));
      } else {
        a[static_cast<std::size_t>(i) * n + j] = sum / a[static_cast<std::size_t>(j) * n + j];
      }
    }
  }
  // Forward substitution L y = b, then back substitution L^T x = y.
  for (int r = 0; r < nrhs; ++r) {
    for (int i = 0; i < n; ++i) {
      double sum = b[static_cast<std::size_t>(i) * nrhs + r];
      for (int k = 0; k < i; ++k) {
        sum -= a[static_cast<std::size_t>(i) * n + k] * b[static_cast<std::size_t>(k) * nrhs + r];
      }
      b[static_cast<std::size_t>(i) * nrhs + r] = sum / a[static_cast<std::size_t>(i) * n + i];
    }
    for (int i = n - 1; i >= 0; --i) {
      double sum = b[static_cast<std::size_t>(i) * nrhs + r];
      for (int k = i + 1; k < n; ++k) {
        sum -= a[static_cast<std::size_t>(k) * n + i] * b[static_cast<std::size_t>(k) * nrhs + r];
      }
      b[static_cast<std::size_t>(i) * nrhs + r] = sum / a[static_cast<std::size_t>(i) * n + i];
    }
  }
}

void put_u16(std::ofstream& out, std::uint16_t v) {
  const std::uint8_t b[2] = {static_cast<std::uint8_t>(v & 0xFF),
                             static_cast<std::uint8_t>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

void put_f32(std::ofstream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  std::uint8_t b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<std::uint8_t>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint16_t get_u16(std::ifstream& in) {
  std::uint8_t b[2];
  if (!in.read(reinterpret_cast<char*>(b), 2)) throw FormatError("truncated table file");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

float get_f32(std::ifstream& in) {
  std::uint8_t b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated table file");
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

std::vector<double> quantize_dims(const std::vector<double>& values,
                                  const DimQuant* dims, std::vector<int>& symbols) {
  const std::size_t n = values.size();
  std::vector<double> deq(n, 0.0);
  symbols.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const DimQuant& d = dims[i];
    if (d.scale < kDegenerateScale) continue;  // collapsed dimension
    long sym = scale_quantize(values[i], d.scale, d.delta);
    sym = std::clamp<long>(sym, -255, 255);
    symbols[i] = static_cast<int>(sym);
    deq[i] = unscale(sym, d.scale);
  }
  return deq;
}

}  // namespace

ReferenceTransform::ReferenceTransform(const TransformConfig& config)
    : cfg_(config) {
  const std::size_t S = static_cast<std::size_t>(cfg_.state_dim);
  const std::size_t M = static_cast<std::size_t>(cfg_.latent_dim);
  const std::size_t out_rows = static_cast<std::size_t>(frames_per_latent()) * kF;

  Rng rng(cfg_.seed ^ 0x72616E64ull);

  fill_gaussian(enc_state_, S, S, 1.0, rng);
  rescale_to_norm(enc_state_, S, 0.90);
  fill_gaussian(enc_in_, S, 2 * kF, 0.6, rng);
  fill_gaussian(enc_is_, S, S, 1.0, rng);

  // Latent readout rows decay so the latent space has a wide variance
  // spread; training then collapses the cheap dimensions first.
  fill_gaussian(enc_latent_, M, S, 1.0, rng);
  for (std::size_t r = 0; r < M; ++r) {
    const double scale =
        4.0 * std::exp(-3.5 * static_cast<double>(r) / static_cast<double>(M - 1));
    for (std::size_t c = 0; c < S; ++c) enc_latent_[r * S + c] *= scale;
  }

  fill_gaussian(dec_state_, S, S, 1.0, rng);
  rescale_to_norm(dec_state_, S, 0.85);
  fill_gaussian(dec_in_, S, M, 0.8, rng);
  dec_out_state_.assign(out_rows * S, 0.0);
  dec_out_latent_.assign(out_rows * M, 0.0);
  dec_out_bias_.assign(out_rows, 0.0);

  mean_.assign(kF, 0.0);
  mean_[kCepstrumDim] = 0.5 * (kPitchLogMin + kPitchLogMax);
  mean_[kCepstrumDim + 1] = 0.5;

  fit_decoder_readout();
}

// Closed-form ridge fit of the readout (W, V, bias) that predicts the
// covered feature frames from the backward state and the latent, over a
// seeded calibration run decoded exactly the way deployment decodes
// (strided latents newest-first, backward state initialized from the IS).
void ReferenceTransform::fit_decoder_readout() {
  const std::size_t S = static_cast<std::size_t>(cfg_.state_dim);
  const std::size_t M = static_cast<std::size_t>(cfg_.latent_dim);
  const int stride = cfg_.stride;
  const int fpl = frames_per_latent();
  const std::size_t out_rows = static_cast<std::size_t>(fpl) * kF;
  const std::size_t cols = S + M + 1;

  const FeatureSequence cal = gen_synthetic_features(cfg_.seed ^ 0xCA11Bull, 4000);
  const int n_steps = static_cast<int>(cal.size()) / 2;

  std::vector<std::vector<double>> z(n_steps), s(n_steps);
  {
    std::vector<double> h;
    for (int t = 0; t < n_steps; ++t) {
      encoder_step(h, cal.frames[2 * t], cal.frames[2 * t + 1], z[t], s[t]);
    }
  }

  std::vector<double> xtx(cols * cols, 0.0);
  std::vector<double> xty(cols * out_rows, 0.0);
  std::vector<double> x(cols);
  std::vector<double> y(out_rows);

  const int segment = 50;
  for (int a = 0; a + segment <= n_steps; a += segment) {
    const int newest = a + segment - 1;
    const int m = (newest - a) / stride + 1;
    std::vector<double> g = s[newest];
    for (int j = 0; j < m; ++j) {
      const int step = newest - j * stride;
      const int first_frame = 2 * step - (fpl - 2);
      if (first_frame >= 0) {
        for (std::size_t i = 0; i < S; ++i) x[i] = g[i];
        for (std::size_t i = 0; i < M; ++i) x[S + i] = z[step][i];
        x[S + M] = 1.0;
        for (int f = 0; f < fpl; ++f) {
          const FeatureVector& fv = cal.frames[first_frame + f];
          for (int i = 0; i < kF; ++i) y[static_cast<std::size_t>(f) * kF + i] = fv[i];
        }
        for (std::size_t r = 0; r < cols; ++r) {
          const double xr = x[r];
          for (std::size_t c = r; c < cols; ++c) xtx[r * cols + c] += xr * x[c];
          for (std::size_t o = 0; o < out_rows; ++o) xty[r * out_rows + o] += xr * y[o];
        }
      }
      // Same backward state recursion the decoder uses.
      std::vector<double> pre(S), rec(S);
      matvec(dec_in_, S, M, z[step].data(), pre.data());
      matvec(dec_state_, S, S, g.data(), rec.data());
      for (std::size_t i = 0; i < S; ++i) g[i] = std::tanh(pre[i] + rec[i]);
    }
  }

  for (std::size_t r = 0; r < cols; ++r) {
    for (std::size_t c = 0; c < r; ++c) xtx[r * cols + c] = xtx[c * cols + r];
  }
  double trace = 0.0;
  for (std::size_t c = 0; c < cols; ++c) trace += xtx[c * cols + c];
  const double alpha = 1e-4 * trace / static_cast<double>(cols) + 1e-8;
  for (std::size_t c = 0; c < cols; ++c) xtx[c * cols + c] += alpha;

  cholesky_solve(xtx, static_cast<int>(cols), xty, static_cast<int>(out_rows));

  for (std::size_t o = 0; o < out_rows; ++o) {
    for (std::size_t i = 0; i < S; ++i) dec_out_state_[o * S + i] = xty[i * out_rows + o];
    for (std::size_t i = 0; i < M; ++i) {
      dec_out_latent_[o * M + i] = xty[(S + i) * out_rows + o];
    }
    dec_out_bias_[o] = xty[(S + M) * out_rows + o];
  }
}

void ReferenceTransform::encoder_step(std::vector<double>& h,
                                      const FeatureVector& even,
                                      const FeatureVector& odd,
                                      std::vector<double>& latent,
                                      std::vector<double>& initial_state) const {
  const std::size_t S = static_cast<std::size_t>(cfg_.state_dim);
  const std::size_t M = static_cast<std::size_t>(cfg_.latent_dim);

  double u[2 * kF];
  for (int i = 0; i < kF; ++i) u[i] = even[i] - mean_[i];
  for (int i = 0; i < kF; ++i) u[kF + i] = odd[i] - mean_[i];

  std::vector<double> pre(S);
  matvec(enc_in_, S, 2 * kF, u, pre.data());
  if (h.size() != S) h.assign(S, 0.0);
  std::vector<double> rec(S);
  matvec(enc_state_, S, S, h.data(), rec.data());
  for (std::size_t i = 0; i < S; ++i) h[i] = std::tanh(pre[i] + rec[i]);

  latent.resize(M);
  matvec(enc_latent_, M, S, h.data(), latent.data());
  initial_state.resize(S);
  matvec(enc_is_, S, S, h.data(), initial_state.data());
}

void ReferenceTransform::decoder_step(std::vector<double>& g,
                                      const std::vector<double>& latent,
                                      std::vector<FeatureVector>& block) const {
  const std::size_t S = static_cast<std::size_t>(cfg_.state_dim);
  const std::size_t M = static_cast<std::size_t>(cfg_.latent_dim);
  const int frames = frames_per_latent();

  std::vector<double> out(static_cast<std::size_t>(frames) * kF);
  matvec(dec_out_state_, out.size(), S, g.data(), out.data());
  std::vector<double> out_z(out.size());
  matvec(dec_out_latent_, out.size(), M, latent.data(), out_z.data());

  block.assign(frames, FeatureVector{});
  for (int f = 0; f < frames; ++f) {
    FeatureVector& fv = block[f];
    for (int i = 0; i < kF; ++i) {
      const double v = out[f * kF + i] + out_z[f * kF + i] + dec_out_bias_[f * kF + i];
      if (i < kCepstrumDim) {
        fv.cepstrum[i] = static_cast<float>(v);
      } else if (i == kCepstrumDim) {
        fv.pitch = static_cast<float>(v);
      } else {
        fv.voicing = static_cast<float>(v);
      }
    }
  }

  std::vector<double> pre(S), rec(S);
  matvec(dec_in_, S, M, latent.data(), pre.data());
  matvec(dec_state_, S, S, g.data(), rec.data());
  for (std::size_t i = 0; i < S; ++i) g[i] = std::tanh(pre[i] + rec[i]);
}

std::pair<std::vector<LatentVector>, std::vector<InitialState>> encode_stream(
    const FeatureSequence& features, const ReferenceTransform& transform) {
  if (features.size() < 2 || features.size() % 2 != 0) {
    throw std::invalid_argument("feature count must be even and >= 2");
  }
  StreamEncoder enc(transform);
  enc.push_sequence(features);

  std::vector<LatentVector> latents(enc.steps());
  std::vector<InitialState> states(enc.steps());
  for (int t = 0; t < enc.steps(); ++t) {
    latents[t] = {enc.latent(t), t};
    states[t] = {enc.initial_state(t), t};
  }
  return {std::move(latents), std::move(states)};
}

StreamEncoder::StreamEncoder(const ReferenceTransform& transform)
    : transform_(&transform),
      h_(static_cast<std::size_t>(transform.state_dim()), 0.0) {}

void StreamEncoder::push_pair(const FeatureVector& even, const FeatureVector& odd) {
  std::vector<double> latent, state;
  transform_->encoder_step(h_, even, odd, latent, state);
  latents_.push_back(std::move(latent));
  states_.push_back(std::move(state));
}

void StreamEncoder::push_sequence(const FeatureSequence& features) {
  if (features.size() % 2 != 0) {
    throw std::invalid_argument("feature count must be even");
  }
  for (std::size_t t = 0; t + 1 < features.size(); t += 2) {
    push_pair(features.frames[t], features.frames[t + 1]);
  }
}

FeatureSequence decode_packet_latents(
    const std::vector<std::vector<double>>& latents_newest_first,
    const std::vector<double>& initial_state,
    const ReferenceTransform& transform) {
  if (latents_newest_first.empty()) {
    throw std::invalid_argument("packet decode needs at least one latent");
  }
  const int frames = transform.frames_per_latent();
  const int n = static_cast<int>(latents_newest_first.size());

  FeatureSequence out;
  out.frames.resize(static_cast<std::size_t>(frames) * n);

  std::vector<double> g = initial_state;
  std::vector<FeatureVector> block;
  for (int j = 0; j < n; ++j) {
    transform.decoder_step(g, latents_newest_first[j], block);
    // Block j is the (n-1-j)-th chronologically.
    const std::size_t base = static_cast<std::size_t>(n - 1 - j) * frames;
    for (int f = 0; f < frames; ++f) out.frames[base + f] = block[f];
  }
  return out;
}

LaplaceParams coding_params(const DimQuant& d) {
  LaplaceParams p;
  p.r = std::clamp<double>(d.r_hard, 0.0, 1.0 - 1e-9);
  p.theta = std::max<double>(0.5, d.theta);
  p.delta = std::max<double>(0.0, d.delta);
  return p;
}

QuantizedLatent quantize_latent(const std::vector<double>& latent,
                                const QuantizerTable& table, int lambda_index) {
  if (lambda_index < 0 || lambda_index >= kNumLambda) {
    throw std::invalid_argument("lambda index out of range");
  }
  if (static_cast<int>(latent.size()) != table.latent_dim) {
    throw std::invalid_argument("latent dimension mismatch");
  }
  QuantizedLatent q;
  q.lambda_index = lambda_index;
  q.dequantized = quantize_dims(latent, &table.latent_at(lambda_index, 0), q.symbols);
  return q;
}

QuantizedLatent quantize_is(const std::vector<double>& initial_state,
                            const QuantizerTable& table, int lambda_index) {
  if (lambda_index < 0 || lambda_index >= kNumLambda) {
    throw std::invalid_argument("lambda index out of range");
  }
  if (static_cast<int>(initial_state.size()) != table.is_dim) {
    throw std::invalid_argument("initial state dimension mismatch");
  }
  QuantizedLatent q;
  q.lambda_index = lambda_index;
  q.dequantized = quantize_dims(initial_state, &table.is_at(lambda_index, 0), q.symbols);
  return q;
}

namespace {
constexpr char kTableMagic[8] = {'D', 'R', 'E', 'D', 'Q', 'T', 'A', 'B'};
constexpr std::uint16_t kTableVersion = 1;

void put_dims(std::ofstream& out, const std::vector<DimQuant>& dims) {
  for (const DimQuant& d : dims) {
    put_f32(out, d.scale);
    put_f32(out, d.r_soft);
    put_f32(out, d.r_hard);
    put_f32(out, d.delta);
    put_f32(out, d.theta);
  }
}

void get_dims(std::ifstream& in, std::vector<DimQuant>& dims) {
  for (DimQuant& d : dims) {
    d.scale = get_f32(in);
    d.r_soft = get_f32(in);
    d.r_hard = get_f32(in);
    d.delta = get_f32(in);
    d.theta = get_f32(in);
  }
}
}  // namespace

void save_table(const std::filesystem::path& path, const QuantizerTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  out.write(kTableMagic, sizeof(kTableMagic));
  put_u16(out, kTableVersion);
  put_u16(out, static_cast<std::uint16_t>(table.lambda_values.size()));
  put_u16(out, static_cast<std::uint16_t>(table.latent_dim));
  put_u16(out, static_cast<std::uint16_t>(table.is_dim));
  for (float l : table.lambda_values) put_f32(out, l);
  put_dims(out, table.latent);
  put_dims(out, table.is);
  if (!out) throw FormatError("write failed: " + path.string());
}

QuantizerTable load_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open for reading: " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kTableMagic, 8) != 0) {
    throw FormatError("bad table file magic: " + path.string());
  }
  if (get_u16(in) != kTableVersion) {
    throw FormatError("unsupported table file version: " + path.string());
  }
  QuantizerTable t;
  const int n_lambda = get_u16(in);
  t.latent_dim = get_u16(in);
  t.is_dim = get_u16(in);
  if (n_lambda != kNumLambda) throw FormatError("unexpected lambda count");
  t.lambda_values.resize(n_lambda);
  for (float& l : t.lambda_values) l = get_f32(in);
  t.latent.resize(static_cast<std::size_t>(n_lambda) * t.latent_dim);
  t.is.resize(static_cast<std::size_t>(n_lambda) * t.is_dim);
  get_dims(in, t.latent);
  get_dims(in, t.is);
  return t;
}

QuantizerTable make_heuristic_table(const ReferenceTransform& transform,
                                    const FeatureSequence& probe) {
  const auto [latents, states] = encode_stream(probe, transform);

  auto stddev = [](const std::vector<std::vector<double>>& rows, int dim) {
    std::vector<double> sd(dim, 0.0);
    std::vector<double> mean(dim, 0.0);
    for (const auto& r : rows) {
      for (int i = 0; i < dim; ++i) mean[i] += r[i];
    }
    for (auto& m : mean) m /= static_cast<double>(rows.size());
    for (const auto& r : rows) {
      for (int i = 0; i < dim; ++i) {
        const double d = r[i] - mean[i];
        sd[i] += d * d;
      }
    }
    for (auto& s : sd) s = std::sqrt(s / static_cast<double>(rows.size())) + 1e-9;
    return sd;
  };

  std::vector<std::vector<double>> lat_rows, is_rows;
  lat_rows.reserve(latents.size());
  for (const auto& l : latents) lat_rows.push_back(l.values);
  for (const auto& s : states) is_rows.push_back(s.values);
  const std::vector<double> lat_sd = stddev(lat_rows, transform.latent_dim());
  const std::vector<double> is_sd = stddev(is_rows, transform.state_dim());

  QuantizerTable t;
  t.latent_dim = transform.latent_dim();
  t.is_dim = transform.state_dim();
  t.lambda_values.resize(kNumLambda);
  t.latent.resize(static_cast<std::size_t>(kNumLambda) * t.latent_dim);
  t.is.resize(static_cast<std::size_t>(kNumLambda) * t.is_dim);

  // Target standard deviation of the scaled latent, from fine to coarse.
  for (int l = 0; l < kNumLambda; ++l) {
    const double frac = static_cast<double>(l) / (kNumLambda - 1);
    t.lambda_values[l] = static_cast<float>(0.01 * std::pow(1000.0, frac));
    const double target = 1.6 * std::pow(0.2 / 1.6, frac);

    auto init_dim = [&](DimQuant& d, double sd) {
      const double q = target / sd;
      const double sigma = q * sd;  // == target
      double r = std::exp(-std::sqrt(2.0) / sigma);
      r = std::clamp(r, 1e-6, 0.995);
      d.scale = static_cast<float>(q);
      d.r_soft = static_cast<float>(r);
      d.r_hard = static_cast<float>(r);
      d.delta = 0.25f;
      d.theta = static_cast<float>(std::max(0.5, theta_implicit(r)));
    };
    for (int i = 0; i < t.latent_dim; ++i) init_dim(t.latent_at(l, i), lat_sd[i]);
    for (int i = 0; i < t.is_dim; ++i) init_dim(t.is_at(l, i), is_sd[i]);
  }
  return t;
}

}  // namespace dred
