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

#ifndef DRED_LAPLACE_HPP
#define DRED_LAPLACE_HPP

#include <cmath>
#include <cstdint>
#include <cstdlib>

namespace dred {

// Below this decay value the model is a point mass at zero: the dimension
// carries no information and its rate is defined to be exactly 0.
inline constexpr double kDegenerateR = 1e-9;

// Scales below this are treated as fully collapsed dimensions: every input
// quantizes to symbol 0 and dequantizes to 0.
inline constexpr double kDegenerateScale = 1e-6;

// Laplace model of one latent dimension together with its dead-zone
// quantizer.  r is the decay of p(z) = (-log r / 2) r^|z| and relates to the
// standard deviation by r = exp(-sqrt(2)/sigma).  theta >= 1/2 is the hard
// dead-zone threshold, delta >= 0 the width of its differentiable stand-in,
// and epsilon = 0.1 stabilizes the soft dead zone near delta = 0.
struct LaplaceParams {
  double r = 0.6;
  double theta = 0.5;
  double delta = 0.0;
  double epsilon = 0.1;

  bool valid() const {
    return r > 0.0 && r < 1.0 && theta >= 0.5 && delta >= 0.0;
  }
};

// Continuous Laplace density (-log r / 2) r^|z|.
inline double continuous_pdf(double z, const LaplaceParams& p) {
  return -0.5 * std::log(p.r) * std::pow(p.r, std::abs(z));
}

// Hard dead-zone quantizer with unit step size:
//   sgn(z) * floor(max(|z| + 1 - theta, 0)).
// The open interval (-theta, theta) maps to 0.  At theta = 1/2 this rounds
// to the nearest integer; exact half-integer ties land away from zero
// because floor(|z| + 1/2) is evaluated on the closed boundary.
inline long quantize_deadzone(double z, double theta) {
  const double mag = std::abs(z) + 1.0 - theta;
  if (mag <= 0.0) return 0;
  const long k = static_cast<long>(std::floor(mag));
  return z < 0.0 ? -k : k;
}

// Differentiable dead zone zeta(z) = z - delta * tanh(z / (delta + eps)).
inline double soft_deadzone(double z, double delta, double epsilon = 0.1) {
  return z - delta * std::tanh(z / (delta + epsilon));
}

// d/dz of soft_deadzone: 1 - (delta/(delta+eps)) * sech^2(z/(delta+eps)).
inline double soft_deadzone_grad(double z, double delta,
                                 double epsilon = 0.1) {
  const double t = std::tanh(z / (delta + epsilon));
  return 1.0 - delta / (delta + epsilon) * (1.0 - t * t);
}

// d/d(delta) of soft_deadzone, needed when the dead-zone width is trained.
inline double soft_deadzone_dwidth(double z, double delta,
                                   double epsilon = 0.1) {
  const double s = delta + epsilon;
  const double t = std::tanh(z / s);
  return -t + delta * z * (1.0 - t * t) / (s * s);
}

// Probability mass of the quantized value:
//   P(0)    = 1 - r^theta
//   P(k!=0) = (1-r)/2 * r^(|k| + theta - 1).
inline double discrete_pmf(long k, const LaplaceParams& p) {
  if (k == 0) return 1.0 - std::pow(p.r, p.theta);
  return 0.5 * (1.0 - p.r) * std::pow(p.r, std::abs(static_cast<double>(k)) + p.theta - 1.0);
}

// The theta for which both branches of the discrete pmf agree at zero,
// log_r(2r / (1+r)).  With this value the pmf collapses to
// P(k) = ((1-r)/(1+r)) r^|k| for every k.
inline double theta_implicit(double r) {
  return std::log(2.0 * r / (1.0 + r)) / std::log(r);
}

// Per-sample code length in bits under the implicit-theta discrete Laplace:
//   -log2((1-r)/(1+r)) - z_abs * log2(r).
// Averaging over samples gives the generalized discrete entropy.  In the
// degenerate limit r -> 0 the dimension carries nothing and the cost is 0.
inline double rate_bits(double z_abs, double r) {
  if (r < kDegenerateR) return 0.0;
  return -std::log2((1.0 - r) / (1.0 + r)) - z_abs * std::log2(r);
}

// d/dr of rate_bits at fixed z_abs.
inline double rate_bits_dr(double z_abs, double r) {
  if (r < kDegenerateR) return 0.0;
  constexpr double kInvLn2 = 1.44269504088896340736;
  return (2.0 / (1.0 - r * r) - z_abs / r) * kInvLn2;
}

// Quantization with a learned scale: round(zeta(q * z_e)).  Rounding is to
// the nearest integer with half-way ties away from zero.
inline long scale_quantize(double z_e, double q, double delta,
                           double epsilon = 0.1) {
  return std::lround(soft_deadzone(q * z_e, delta, epsilon));
}

// Undo the scaling: z_d = z_q / q.
inline double unscale(long z_q, double q) {
  return static_cast<double>(z_q) / q;
}

}  // namespace dred

#endif  // DRED_LAPLACE_HPP
