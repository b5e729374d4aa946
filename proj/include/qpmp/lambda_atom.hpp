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

// Three-level Lambda atom: excited |e> decays to the ground states |a> and |b>;
// a classical field drives the e-a transition. Basis order is (e, a, b).

#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "qpmp/constraints.hpp"
#include "qpmp/dynamics.hpp"
#include "qpmp/fidelity.hpp"
#include "qpmp/solver.hpp"

namespace qpmp::lambda {

inline constexpr Eigen::Index kDim = 3;
inline constexpr Eigen::Index kE = 0;
inline constexpr Eigen::Index kA = 1;
inline constexpr Eigen::Index kB = 2;

struct LambdaAtomModel {
  double energy_e = 0.8;
  double energy_a = 0.5;
  double energy_b = 0.4;
  double gamma_a = 1e-1;  ///< e -> a decay rate
  double gamma_b = 1e-3;  ///< e -> b decay rate

  double omega1() const { return energy_e - energy_a; }
  double omega2() const { return energy_e - energy_b; }
  double omega3() const { return energy_a - energy_b; }
};

/// |i><j| in the (e, a, b) basis.
inline ComplexMatrix ket_bra(Eigen::Index i, Eigen::Index j) {
  ComplexMatrix m = ComplexMatrix::Zero(kDim, kDim);
  m(i, j) = 1.0;
  return m;
}

inline ComplexMatrix projector(Eigen::Index j) { return ket_bra(j, j); }

/// sum_j E_j |j><j|.
inline ComplexMatrix drift_hamiltonian(const LambdaAtomModel& model) {
  return model.energy_e * projector(kE) + model.energy_a * projector(kA) + model.energy_b * projector(kB);
}

/// Traceless frequency form (w1/3)(P_e - P_a) + (w2/3)(P_e - P_b) + (w3/3)(P_a - P_b).
/// With w1 = E_e - E_a, w2 = E_e - E_b, w3 = E_a - E_b it equals the energy form
/// minus (E_e + E_a + E_b)/3.
inline ComplexMatrix drift_from_frequencies(double w1, double w2, double w3) {
  return (w1 / 3.0) * (projector(kE) - projector(kA)) + (w2 / 3.0) * (projector(kE) - projector(kB)) +
         (w3 / 3.0) * (projector(kA) - projector(kB));
}

/// u cos(w t) (e^{-i phi} |e><a| + e^{i phi} |a><e|).
inline ComplexMatrix control_hamiltonian(double u, double omega, double phi, double t) {
  const Complex amp = u * std::cos(omega * t);
  return amp * (std::polar(1.0, -phi) * ket_bra(kE, kA) + std::polar(1.0, phi) * ket_bra(kA, kE));
}

/// Pure target cos(beta)|b> + sin(beta)|a>.
inline TargetState target_state(double beta) {
  const double s = std::sin(beta);
  const double c = std::cos(beta);
  ComplexMatrix sigma = ComplexMatrix::Zero(kDim, kDim);
  sigma(kA, kA) = s * s;
  sigma(kA, kB) = s * c;
  sigma(kB, kA) = s * c;
  sigma(kB, kB) = c * c;
  return TargetState(DensityMatrix(std::move(sigma)));
}

inline ComplexMatrix jump_to_a() { return ket_bra(kA, kE); }
inline ComplexMatrix jump_to_b() { return ket_bra(kB, kE); }

inline Channels channels(const LambdaAtomModel& model) {
  return {LindbladChannel(jump_to_a(), model.gamma_a), LindbladChannel(jump_to_b(), model.gamma_b)};
}

/// M1 = |e><a| + |a><e|, M2 = -i(|e><a| - |a><e|).
inline std::vector<ComplexMatrix> coherence_operators() {
  return {ket_bra(kE, kA) + ket_bra(kA, kE), -kI * (ket_bra(kE, kA) - ket_bra(kA, kE))};
}

inline HamiltonianModel hamiltonian_model(const LambdaAtomModel& model) {
  return {drift_hamiltonian(model), [](double u, double omega, double phi, double t) {
            return control_hamiltonian(u, omega, phi, t);
          }};
}

inline DensityMatrix excited_state() { return DensityMatrix(projector(kE)); }

/// rho0 = |e><e|, pure target from beta, coherence bounds from (c0, alpha).
/// The excited state has zero coherence, so a strict lower bound is infeasible at t = 0.
inline Problem default_problem(double beta, double c0, double alpha, LowerBoundMode mode = LowerBoundMode::grace,
                               const LambdaAtomModel& model = {}) {
  Problem p{hamiltonian_model(model), channels(model), CoherenceSpec(coherence_operators(), c0, alpha, mode),
            excited_state(), target_state(beta)};
  check_initial_feasibility(p);
  return p;
}

}  // namespace qpmp::lambda
