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

// Adjoint (costate) dynamics. With the pairing tr(pi^dag rho),
//
//   -d/dt pi^dag = G(pi^dag) - mu_bar sum_i [ M_i tr(G(M_i^dag) rho) + tr(M_i rho) G(M_i^dag) ],
//   G(X) = -i[X, H] + D(X) + D0(X),   D0(X) = sum_k g_k (L^dag X L - L X L^dag),
//
// so D + D0 is the Heisenberg-picture dissipator. The mu_bar term is the
// state-dependent source that the vectorized form carries separately.

#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "qpmp/constraints.hpp"
#include "qpmp/dynamics.hpp"
#include "qpmp/matrixcore.hpp"

namespace qpmp {

class CostateMatrix {
 public:
  explicit CostateMatrix(ComplexMatrix m) : mat_(std::move(m)) {
    require_square(mat_, "costate");
    if (!all_finite(mat_)) throw NumericError("costate: non-finite entries");
  }

  const ComplexMatrix& matrix() const noexcept { return mat_; }
  Eigen::Index dim() const noexcept { return mat_.rows(); }

 private:
  ComplexMatrix mat_;
};

inline ComplexMatrix d0(const ComplexMatrix& x, const Channels& channels) {
  require_square(x, "d0");
  require_channels(x, channels, "d0");
  ComplexMatrix out = ComplexMatrix::Zero(x.rows(), x.cols());
  for (const auto& ch : channels) {
    const ComplexMatrix& l = ch.jump;
    out += ch.rate * (l.adjoint() * x * l - l * x * l.adjoint());
  }
  return out;
}

inline ComplexMatrix g_operator(const ComplexMatrix& x, const ComplexMatrix& h, const Channels& channels) {
  require_same_dim(x, h, "g_operator");
  return -kI * (x * h - h * x) + dissipator(x, channels) + d0(x, channels);
}

/// -mu_bar sum_i [ M_i tr(G(M_i^dag) rho) + tr(M_i rho) G(M_i^dag) ].
inline ComplexMatrix constraint_source(const ComplexMatrix& rho, double mu_bar, const ComplexMatrix& h,
                                       const Channels& channels, const CoherenceSpec& spec) {
  ComplexMatrix out = ComplexMatrix::Zero(rho.rows(), rho.cols());
  if (mu_bar == 0.0) return out;
  for (const auto& m : spec.ops) {
    const ComplexMatrix gm = g_operator(m.adjoint(), h, channels);
    out += m * (gm * rho).trace() + (m * rho).trace() * gm;
  }
  return -mu_bar * out;
}

/// Right-hand side of the adjoint equation, i.e. -d/dt pi^dag.
inline ComplexMatrix adjoint_rhs(const CostateMatrix& pi, const DensityMatrix& rho, double mu_bar,
                                 const ComplexMatrix& h, const Channels& channels, const CoherenceSpec& spec) {
  require_same_dim(pi.matrix(), rho.matrix(), "adjoint_rhs");
  return g_operator(pi.matrix().adjoint(), h, channels) + constraint_source(rho.matrix(), mu_bar, h, channels, spec);
}

enum class AdjointMode {
  derived,  ///< vectorization of G, column by column
  printed,  ///< L + sum_k g_k (L^T (x) L^dag + L^* (x) L); differs from the dual of G
};

struct AdjointGenerator {
  ComplexMatrix derived_form;
  ComplexMatrix printed_form;

  double discrepancy() const { return (derived_form - printed_form).norm(); }
  const ComplexMatrix& form(AdjointMode mode) const {
    return mode == AdjointMode::derived ? derived_form : printed_form;
  }
};

inline ComplexMatrix vectorized_g(const ComplexMatrix& h, const Channels& channels) {
  const Eigen::Index n = h.rows();
  ComplexMatrix out(n * n, n * n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      ComplexMatrix e = ComplexMatrix::Zero(n, n);
      e(i, j) = 1.0;
      out.col(i + n * j) = vectorize(g_operator(e, h, channels));
    }
  }
  return out;
}

inline ComplexMatrix printed_adjoint_form(const ComplexMatrix& h, const Channels& channels) {
  ComplexMatrix out = liouvillian(h, channels);
  for (const auto& ch : channels) {
    const ComplexMatrix& l = ch.jump;
    out += ch.rate * (kron(l.transpose(), l.adjoint()) + kron(l.conjugate(), l));
  }
  return out;
}

inline AdjointGenerator adjoint_generator(const ComplexMatrix& h, const Channels& channels) {
  require_square(h, "adjoint_generator");
  require_channels(h, channels, "adjoint_generator");
  return {vectorized_g(h, channels), printed_adjoint_form(h, channels)};
}

inline ComplexMatrix adjoint_generator(const ComplexMatrix& h, const Channels& channels, AdjointMode mode) {
  return mode == AdjointMode::derived ? vectorized_g(h, channels) : printed_adjoint_form(h, channels);
}

struct CostateTrajectory {
  std::vector<CostateMatrix> costates;  ///< pi_0 .. pi_N

  std::size_t steps() const noexcept { return costates.empty() ? 0 : costates.size() - 1; }
};

/// Backward sweep m = N-1 .. 0 on x = vec(pi^dag):
///   x_m = exp(h Ghat_m) x_{m+1} + h vec(source(rho_m, mu_bar_m)),
/// i.e. exact exponentials per subinterval and a left-endpoint sample of the source.
inline CostateTrajectory propagate_backward(const CostateMatrix& pi_terminal, const Trajectory& traj,
                                            const MultiplierTrack& track, const ControlSchedule& schedule,
                                            const HamiltonianModel& model, const Channels& channels,
                                            const CoherenceSpec& spec, AdjointMode mode = AdjointMode::derived) {
  const std::size_t n_steps = schedule.steps();
  if (traj.states.size() != n_steps + 1) throw DimensionError("propagate_backward: trajectory length mismatch");
  if (track.steps() != n_steps) throw DimensionError("propagate_backward: multiplier track length mismatch");
  require_same_dim(pi_terminal.matrix(), traj.states.front().matrix(), "propagate_backward");
  const Eigen::Index n = pi_terminal.dim();
  const double h = schedule.step_size();

  std::vector<ComplexMatrix> out(n_steps + 1);
  out[n_steps] = pi_terminal.matrix();
  VecForm x = vectorize(pi_terminal.matrix().adjoint());
  for (std::size_t m = n_steps; m-- > 0;) {
    const ComplexMatrix hm = schedule.hamiltonian(model, m);
    x = matrix_exponential(h * adjoint_generator(hm, channels, mode)) * x;
    const double mu_bar = track.mu_bar(m);
    if (mu_bar != 0.0) x += h * vectorize(constraint_source(traj.states[m].matrix(), mu_bar, hm, channels, spec));
    ComplexMatrix pi_dag = devectorize(x, n);
    if (!all_finite(pi_dag)) throw PropagationError(m, "non-finite costate");
    out[m] = pi_dag.adjoint();
  }

  CostateTrajectory result;
  result.costates.reserve(n_steps + 1);
  for (auto& p : out) result.costates.emplace_back(std::move(p));
  return result;
}

}  // namespace qpmp
