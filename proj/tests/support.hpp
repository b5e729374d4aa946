// Copyright 2026 The qpmp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Random inputs and independent integrators shared by the test suites.

#pragma once

#include <Eigen/QR>

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "qpmp/qpmp.hpp"

namespace qpmp::testing {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform(double lo = -1.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen_); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(gen_); }

 private:
  std::mt19937_64 gen_;
};

inline ComplexMatrix random_matrix(Eigen::Index n, Rng& rng, double scale = 1.0) {
  ComplexMatrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = scale * Complex(rng.normal(), rng.normal());
  }
  return m;
}

inline ComplexMatrix random_hermitian(Eigen::Index n, Rng& rng, double scale = 1.0) {
  const ComplexMatrix a = random_matrix(n, rng, scale);
  return 0.5 * (a + a.adjoint());
}

inline ComplexMatrix random_unitary(Eigen::Index n, Rng& rng) {
  Eigen::HouseholderQR<ComplexMatrix> qr(random_matrix(n, rng));
  return qr.householderQ() * ComplexMatrix::Identity(n, n);
}

/// Full-rank state; Ginibre draws have a distinct spectrum almost surely.
inline ComplexMatrix random_density(Eigen::Index n, Rng& rng) {
  const ComplexMatrix a = random_matrix(n, rng);
  ComplexMatrix rho = a * a.adjoint();
  rho /= rho.trace().real();
  return 0.5 * (rho + rho.adjoint());
}

/// Random state with eigenvalues bounded away from each other and from zero.
inline ComplexMatrix random_separated_density(Eigen::Index n, Rng& rng, double min_gap = 0.02) {
  for (;;) {
    ComplexMatrix rho = random_density(n, rng);
    const RealVector l = hermitian_eigenvalues(rho);
    bool ok = l(0) > min_gap;
    for (Eigen::Index i = 1; i < n; ++i) ok = ok && l(i) - l(i - 1) > min_gap;
    if (ok) return rho;
  }
}

inline ComplexMatrix random_pure(Eigen::Index n, Rng& rng) {
  Eigen::VectorXcd psi(n);
  for (Eigen::Index i = 0; i < n; ++i) psi(i) = Complex(rng.normal(), rng.normal());
  psi.normalize();
  return psi * psi.adjoint();
}

inline Channels random_channels(Eigen::Index n, std::size_t count, Rng& rng) {
  Channels ch;
  for (std::size_t k = 0; k < count; ++k) ch.emplace_back(random_matrix(n, rng, 0.5), rng.uniform(0.0, 0.5));
  return ch;
}

/// Classical fourth-order Runge-Kutta for dX/dt = f(X) over [0, t] in 'substeps' steps.
inline ComplexMatrix rk4(const std::function<ComplexMatrix(const ComplexMatrix&)>& f, ComplexMatrix x, double t,
                         int substeps) {
  const double h = t / substeps;
  for (int s = 0; s < substeps; ++s) {
    const ComplexMatrix k1 = f(x);
    const ComplexMatrix k2 = f(x + 0.5 * h * k1);
    const ComplexMatrix k3 = f(x + 0.5 * h * k2);
    const ComplexMatrix k4 = f(x + h * k3);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return x;
}

/// Matrix-form master equation on one constant-generator interval, written out term by term.
inline ComplexMatrix rk4_master(const ComplexMatrix& rho, const ComplexMatrix& h, const Channels& ch, double t,
                                int substeps = 1000) {
  auto f = [&](const ComplexMatrix& x) {
    ComplexMatrix out = -kI * (h * x - x * h);
    for (const auto& c : ch) {
      const ComplexMatrix& l = c.jump;
      out += c.rate * (l * x * l.adjoint() - 0.5 * l.adjoint() * l * x - 0.5 * x * l.adjoint() * l);
    }
    return out;
  };
  return rk4(f, rho, t, substeps);
}

/// Heisenberg-picture generator written independently of the library:
/// i[H, X] + sum g (L^dag X L - 1/2 {L^dag L, X}).
inline ComplexMatrix heisenberg(const ComplexMatrix& x, const ComplexMatrix& h, const Channels& ch) {
  ComplexMatrix out = kI * (h * x - x * h);
  for (const auto& c : ch) {
    const ComplexMatrix& l = c.jump;
    const ComplexMatrix ldl = l.adjoint() * l;
    out += c.rate * (l.adjoint() * x * l - 0.5 * (ldl * x + x * ldl));
  }
  return out;
}

inline double max_abs(const ComplexMatrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

inline ControlSchedule random_schedule(std::size_t n, Rng& rng, double bound = 1.0) {
  ControlSchedule s;
  s.u.resize(n);
  for (auto& u : s.u) u = rng.uniform(-bound, bound);
  s.omega = rng.uniform(0.1, 0.5);
  s.phi = rng.uniform(0.0, 6.283185307179586);
  return s;
}

}  // namespace qpmp::testing
