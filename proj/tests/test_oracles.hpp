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

// Independent numerical oracles used by the tests.  Everything here is
// deliberately brute force (quadrature, direct summation, finite
// differences) and shares no code with the library paths it checks.

#ifndef DRED_TEST_ORACLES_HPP
#define DRED_TEST_ORACLES_HPP

#include <cmath>
#include <cstdint>

#include "dred/laplace.hpp"

namespace oracle {

template <typename F>
double trapezoid(F f, double a, double b, int n) {
  const double h = (b - a) / n;
  double acc = 0.5 * (f(a) + f(b));
  for (int i = 1; i < n; ++i) acc += f(a + i * h);
  return acc * h;
}

template <typename F>
double simpson(F f, double a, double b, int n) {
  if (n % 2) ++n;
  const double h = (b - a) / n;
  double acc = f(a) + f(b);
  for (int i = 1; i < n; ++i) acc += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

template <typename F>
double central_diff(F f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Probability mass the continuous density assigns to the preimage of k
// under the hard dead-zone quantizer: cell (-theta, theta) for k = 0,
// [k + theta - 1, k + theta) for k >= 1, mirrored for k <= -1.
inline double cell_mass(const dred::LaplaceParams& p, long k) {
  auto pdf = [&](double z) { return dred::continuous_pdf(z, p); };
  if (k == 0) {
    // Split at the |z| kink.
    return simpson(pdf, -p.theta, 0.0, 1 << 14) + simpson(pdf, 0.0, p.theta, 1 << 14);
  }
  const double lo = std::abs(static_cast<double>(k)) + p.theta - 1.0;
  const double m = simpson(pdf, lo, lo + 1.0, 1 << 14);
  return m;
}

// Entropy of the discrete Laplace pmf by direct summation.
inline double discrete_entropy_bits(const dred::LaplaceParams& p, long kmax = 4096) {
  double h = 0.0;
  for (long k = -kmax; k <= kmax; ++k) {
    const double mass = dred::discrete_pmf(k, p);
    if (mass > 0.0) h -= mass * std::log2(mass);
  }
  return h;
}

}  // namespace oracle

#endif  // DRED_TEST_ORACLES_HPP
