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

// Lindblad master equation (hbar = 1), its column-stacked Liouvillian, and
// exact propagation under piecewise-constant controls on t in [0, 1].

#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qpmp/matrixcore.hpp"

namespace qpmp {

struct StateTolerances {
  double hermiticity = 1e-10;
  double trace = 1e-10;
  double min_eigenvalue = -1e-9;
};

struct StateDiagnostics {
  double trace_error = 0.0;
  double hermiticity_error = 0.0;
  double min_eigenvalue = 0.0;

  bool within(const StateTolerances& tol) const {
    return trace_error <= tol.trace && hermiticity_error <= tol.hermiticity && min_eigenvalue >= tol.min_eigenvalue;
  }
};

inline StateDiagnostics diagnose_state(const ComplexMatrix& m) {
  require_square(m, "density matrix");
  if (!all_finite(m)) throw NumericError("density matrix: non-finite entries");
  StateDiagnostics d;
  d.trace_error = std::abs(m.trace() - Complex(1.0, 0.0));
  d.hermiticity_error = hermiticity_error(m);
  const ComplexMatrix h = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h, Eigen::EigenvaluesOnly);
  d.min_eigenvalue = es.eigenvalues().size() ? es.eigenvalues()(0) : 0.0;
  return d;
}

/// Hermitian, positive semidefinite, unit-trace state. Validated on construction.
class DensityMatrix {
 public:
  explicit DensityMatrix(ComplexMatrix m, const StateTolerances& tol = {}) : mat_(std::move(m)) {
    const auto d = diagnose_state(mat_);
    if (!d.within(tol)) {
      throw InvalidStateError("not a density matrix: trace error " + std::to_string(d.trace_error) +
                              ", hermiticity error " + std::to_string(d.hermiticity_error) + ", min eigenvalue " +
                              std::to_string(d.min_eigenvalue));
    }
  }

  const ComplexMatrix& matrix() const noexcept { return mat_; }
  Eigen::Index dim() const noexcept { return mat_.rows(); }
  double purity() const { return trace_pairing(mat_, mat_); }

 private:
  ComplexMatrix mat_;
};

struct LindbladChannel {
  ComplexMatrix jump;
  double rate = 0.0;

  LindbladChannel(ComplexMatrix l, double gamma) : jump(std::move(l)), rate(gamma) {
    require_square(jump, "Lindblad operator");
    if (!(rate >= 0.0)) throw InvalidStateError("Lindblad rate must be non-negative");
  }
};

using Channels = std::vector<LindbladChannel>;

/// H(u, omega, phi, t) = drift + coupling(u, omega, phi, t).
///
/// The coupling must be Hermitian and linear in u (H_C = u * K(omega, phi, t));
/// the control maximization relies on that linearity.
struct HamiltonianModel {
  using Coupling = std::function<ComplexMatrix(double u, double omega, double phi, double t)>;

  ComplexMatrix drift;
  Coupling coupling;

  ComplexMatrix hamiltonian(double u, double omega, double phi, double t) const {
    return coupling ? ComplexMatrix(drift + coupling(u, omega, phi, t)) : drift;
  }
  Eigen::Index dim() const { return drift.rows(); }
};

/// Piecewise-constant amplitude u_m on [m/N, (m+1)/N) plus the shared (omega, phi).
struct ControlSchedule {
  std::vector<double> u;
  double omega = 0.0;
  double phi = 0.0;

  std::size_t steps() const noexcept { return u.size(); }
  double step_size() const { return 1.0 / static_cast<double>(u.size()); }
  double time(std::size_t m) const { return static_cast<double>(m) / static_cast<double>(u.size()); }
  /// Hamiltonian on subinterval m, sampled at its left endpoint t_m.
  ComplexMatrix hamiltonian(const HamiltonianModel& model, std::size_t m) const {
    return model.hamiltonian(u[m], omega, phi, time(m));
  }

  friend bool operator==(const ControlSchedule&, const ControlSchedule&) = default;
};

enum class PropagatorMode {
  product,    ///< ordered product of per-step exponentials (exact)
  exponent_sum,  ///< exp of the summed generators; exact only for commuting steps
};

inline void require_channels(const ComplexMatrix& x, const Channels& channels, const char* what) {
  for (const auto& ch : channels) require_same_dim(x, ch.jump, what);
}

/// sum_k g_k (L X L^dag - 1/2 L^dag L X - 1/2 X L^dag L).
inline ComplexMatrix dissipator(const ComplexMatrix& x, const Channels& channels) {
  require_square(x, "dissipator");
  require_channels(x, channels, "dissipator");
  ComplexMatrix out = ComplexMatrix::Zero(x.rows(), x.cols());
  for (const auto& ch : channels) {
    const ComplexMatrix& l = ch.jump;
    const ComplexMatrix ldl = l.adjoint() * l;
    out += ch.rate * (l * x * l.adjoint() - 0.5 * (ldl * x + x * ldl));
  }
  return out;
}

inline ComplexMatrix dissipator(const DensityMatrix& rho, const Channels& channels) {
  return dissipator(rho.matrix(), channels);
}

/// -i[H, rho] + D(rho).
inline ComplexMatrix master_rhs(const ComplexMatrix& rho, const ComplexMatrix& h, const Channels& channels) {
  require_same_dim(rho, h, "master_rhs");
  return -kI * (h * rho - rho * h) + dissipator(rho, channels);
}

inline ComplexMatrix master_rhs(const DensityMatrix& rho, const ComplexMatrix& h, const Channels& channels) {
  return master_rhs(rho.matrix(), h, channels);
}

inline ComplexMatrix liouvillian(const ComplexMatrix& h, const Channels& channels) {
  require_square(h, "liouvillian");
  require_channels(h, channels, "liouvillian");
  const Eigen::Index n = h.rows();
  const ComplexMatrix id = ComplexMatrix::Identity(n, n);
  ComplexMatrix out = -kI * (kron(id, h) - kron(h.transpose(), id));
  for (const auto& ch : channels) {
    const ComplexMatrix& l = ch.jump;
    const ComplexMatrix ldl = l.adjoint() * l;
    out += ch.rate * (kron(l.conjugate(), l) - 0.5 * kron(id, ldl) - 0.5 * kron(ldl.transpose(), id));
  }
  return out;
}

struct Trajectory {
  std::vector<DensityMatrix> states;  ///< N + 1 states on t_m = m / N
  StateDiagnostics worst;             ///< max trace/hermiticity error, min eigenvalue over all steps

  std::size_t steps() const noexcept { return states.empty() ? 0 : states.size() - 1; }
  const DensityMatrix& final_state() const { return states.back(); }
};

namespace detail {

inline void accumulate(StateDiagnostics& worst, const StateDiagnostics& d) {
  worst.trace_error = std::max(worst.trace_error, d.trace_error);
  worst.hermiticity_error = std::max(worst.hermiticity_error, d.hermiticity_error);
  worst.min_eigenvalue = std::min(worst.min_eigenvalue, d.min_eigenvalue);
}

}  // namespace detail

inline Trajectory propagate_forward(const DensityMatrix& rho0, const ControlSchedule& schedule,
                                    const HamiltonianModel& model, const Channels& channels,
                                    PropagatorMode mode = PropagatorMode::product,
                                    const StateTolerances& tol = {}) {
  const std::size_t n_steps = schedule.steps();
  if (n_steps == 0) throw InvalidStateError("propagate_forward: empty schedule");
  require_same_dim(rho0.matrix(), model.drift, "propagate_forward");
  const Eigen::Index n = rho0.dim();
  const double h = schedule.step_size();

  Trajectory traj;
  traj.states.reserve(n_steps + 1);
  traj.states.push_back(rho0);
  traj.worst = diagnose_state(rho0.matrix());

  const VecForm v0 = vectorize(rho0.matrix());
  VecForm v = v0;
  ComplexMatrix generator_sum = ComplexMatrix::Zero(n * n, n * n);
  for (std::size_t m = 0; m < n_steps; ++m) {
    const ComplexMatrix gen = h * liouvillian(schedule.hamiltonian(model, m), channels);
    try {
      if (mode == PropagatorMode::product) {
        v = matrix_exponential(gen) * v;
      } else {
        generator_sum += gen;
        v = matrix_exponential(generator_sum) * v0;
      }
    } catch (const Error& e) {
      throw PropagationError(m + 1, e.what());
    }
    ComplexMatrix next = devectorize(v, n);
    const auto d = diagnose_state(next);
    if (!d.within(tol)) {
      throw PropagationError(m + 1, "state invariants violated (trace error " + std::to_string(d.trace_error) +
                                        ", hermiticity " + std::to_string(d.hermiticity_error) + ", min eig " +
                                        std::to_string(d.min_eigenvalue) + ")");
    }
    detail::accumulate(traj.worst, d);
    traj.states.emplace_back(std::move(next), tol);
  }
  return traj;
}

}  // namespace qpmp
