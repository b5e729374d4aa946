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

// Indirect (maximum-principle) solver for fidelity maximization under
// coherence bounds:
//
//   1. propagate rho forward under the current controls,
//   2. set pi(1) = grad F, sweep the multipliers and the costate backward,
//   3. maximize the Pontryagin Hamiltonian
//        H = Re tr( (pi - mu_bar sum_i tr(M_i rho) M_i)^dag (-i[H, rho] + D(rho)) )
//      over the control grids,
//   4. stop once u, omega and phi all move less than their tolerances.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qpmp/constraints.hpp"
#include "qpmp/costate.hpp"
#include "qpmp/dynamics.hpp"
#include "qpmp/fidelity.hpp"
#include "qpmp/matrixcore.hpp"

namespace qpmp {

struct ControlPoint {
  double u = 0.0;
  double omega = 0.0;
  double phi = 0.0;

  friend bool operator==(const ControlPoint&, const ControlPoint&) = default;
};

/// Everything needed to pose one transfer problem.
struct Problem {
  HamiltonianModel model;
  Channels channels;
  CoherenceSpec spec;
  DensityMatrix rho0;
  TargetState target;
};

/// H_m(u, omega, phi) at a fixed grid point: state, costate and multiplier frozen.
class StepHamiltonian {
 public:
  StepHamiltonian(const ComplexMatrix& rho, const ComplexMatrix& pi, double mu_bar, double t,
                  const HamiltonianModel& model, const Channels& channels, const CoherenceSpec& spec)
      : rho_(rho),
        effective_costate_(pi - mu_bar * coherence_direction(rho, spec)),
        dissipation_(dissipator(rho, channels)),
        t_(t),
        model_(&model) {
    require_same_dim(rho, pi, "pontryagin_hamiltonian");
    require_same_dim(rho, model.drift, "pontryagin_hamiltonian");
  }

  /// Full complex trace; the Hamiltonian is its real part.
  Complex trace(double u, double omega, double phi) const {
    const ComplexMatrix h = model_->hamiltonian(u, omega, phi, t_);
    const ComplexMatrix rhs = -kI * (h * rho_ - rho_ * h) + dissipation_;
    return (effective_costate_.conjugate().cwiseProduct(rhs)).sum();
  }

  double operator()(double u, double omega, double phi) const { return trace(u, omega, phi).real(); }
  double operator()(const ControlPoint& v) const { return (*this)(v.u, v.omega, v.phi); }

  double time() const noexcept { return t_; }

 private:
  ComplexMatrix rho_;
  ComplexMatrix effective_costate_;
  ComplexMatrix dissipation_;
  double t_;
  const HamiltonianModel* model_;
};

/// Re tr((pi - mu_bar sum_i tr(M_i rho) M_i)^dag (-i[H, rho] + D(rho))) at time t.
inline double pontryagin_hamiltonian(const DensityMatrix& rho, const CostateMatrix& pi, double mu_bar,
                                     const ControlPoint& v, double t, const HamiltonianModel& model,
                                     const Channels& channels, const CoherenceSpec& spec) {
  return StepHamiltonian(rho.matrix(), pi.matrix(), mu_bar, t, model, channels, spec)(v);
}

/// Same Hamiltonian in the (mu1, mu2) form, Re tr((pi - mu . grad h)^dag F) with
/// grad h = (grad C^2, -grad C^2). Equals pontryagin_hamiltonian at mu_bar = 2 (mu1 - mu2).
inline double extended_hamiltonian(const DensityMatrix& rho, const CostateMatrix& pi, double mu1, double mu2,
                                   const ControlPoint& v, double t, const HamiltonianModel& model,
                                   const Channels& channels, const CoherenceSpec& spec) {
  const ComplexMatrix grad = coherence_gradient(rho, spec);
  const ComplexMatrix weighted = mu1 * grad + mu2 * (-grad);
  const ComplexMatrix f = master_rhs(rho, model.hamiltonian(v.u, v.omega, v.phi, t), channels);
  return ((pi.matrix() - weighted).adjoint() * f).trace().real();
}

/// dH/du = Re tr(P^dag (-i[K, rho])), K = dH/du of the (linear) coupling.
inline double hamiltonian_u_derivative(const ComplexMatrix& rho, const ComplexMatrix& pi, double mu_bar,
                                       const ControlPoint& v, double t, const HamiltonianModel& model,
                                       const CoherenceSpec& spec) {
  if (!model.coupling) return 0.0;
  const ComplexMatrix k = model.coupling(1.0, v.omega, v.phi, t) - model.coupling(0.0, v.omega, v.phi, t);
  const ComplexMatrix p = pi - mu_bar * coherence_direction(rho, spec);
  return (p.conjugate().cwiseProduct(-kI * (k * rho - rho * k))).sum().real();
}

/// Search grids. Values are kept sorted so "first found" means "smallest".
struct ControlGrids {
  std::vector<double> u;
  std::vector<double> omega;
  std::vector<double> phi;

  ControlGrids() = default;
  ControlGrids(std::vector<double> u_, std::vector<double> omega_, std::vector<double> phi_)
      : u(std::move(u_)), omega(std::move(omega_)), phi(std::move(phi_)) {
    std::sort(u.begin(), u.end());
    std::sort(omega.begin(), omega.end());
    std::sort(phi.begin(), phi.end());
  }

  /// `count` evenly spaced points on [lo, hi] (closed).
  static std::vector<double> linspace(double lo, double hi, std::size_t count) {
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
      out[i] = count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
    }
    return out;
  }

  /// `count` evenly spaced phases on [0, 2 pi).
  static std::vector<double> phases(std::size_t count) {
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
      out[i] = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(count);
    }
    return out;
  }

  bool empty() const { return u.empty() || omega.empty() || phi.empty(); }
};

struct MaximizerOptions {
  /// A candidate replaces the incumbent only if it is larger by more than
  /// tie_tolerance * max(1, |incumbent|).
  double tie_tolerance = 1e-10;
  /// Second pass at half the grid spacing around the coarse winner.
  bool refine = false;
  /// In the solver loop, keep the current controls unless a grid point strictly beats them.
  bool prefer_incumbent = false;
};

struct MaximizerResult {
  std::vector<double> u;  ///< per step
  double omega = 0.0;
  double phi = 0.0;
  double total = 0.0;  ///< sum_m H_m at the returned controls
};

namespace detail {

inline bool improves(double candidate, double incumbent, double tol) {
  return candidate > incumbent + tol * std::max(1.0, std::abs(incumbent));
}

inline double spacing(const std::vector<double>& g) {
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < g.size(); ++i) d = std::min(d, g[i] - g[i - 1]);
  return std::isfinite(d) ? d : 0.0;
}

inline std::vector<double> local_grid(double centre, double half_step, double lo, double hi) {
  std::vector<double> out;
  for (double x : {centre - half_step, centre, centre + half_step}) {
    if (x >= lo && x <= hi && (out.empty() || x > out.back())) out.push_back(x);
  }
  return out;
}

struct StepChoice {
  double u;
  double value;
};

// H_m is affine in u, so u -> v0 + u (v1 - v0) reproduces it from two evaluations.
inline StepChoice best_u(double v0, double slope, const std::vector<double>& u_grid, double tol,
                         std::optional<double> incumbent) {
  StepChoice best{u_grid.front(), v0 + u_grid.front() * slope};
  for (std::size_t i = 1; i < u_grid.size(); ++i) {
    const double v = v0 + u_grid[i] * slope;
    if (improves(v, best.value, tol)) best = {u_grid[i], v};
  }
  if (incumbent) {
    const double v = v0 + *incumbent * slope;
    if (!improves(best.value, v, tol)) best = {*incumbent, v};
  }
  return best;
}

inline MaximizerResult grid_pass(const std::vector<StepHamiltonian>& steps,
                                 const std::vector<std::vector<double>>& u_grids, const std::vector<double>& omegas,
                                 const std::vector<double>& phis, double tol, const MaximizerResult* incumbent) {
  const std::size_t n_steps = steps.size();
  auto evaluate = [&](double omega, double phi, bool keep_incumbent_u) {
    MaximizerResult r{std::vector<double>(n_steps), omega, phi, 0.0};
    for (std::size_t m = 0; m < n_steps; ++m) {
      const double v0 = steps[m](0.0, omega, phi);
      const double slope = steps[m](1.0, omega, phi) - v0;
      std::optional<double> inc;
      if (keep_incumbent_u) inc = incumbent->u[m];
      const auto c = best_u(v0, slope, u_grids[m], tol, inc);
      r.u[m] = c.u;
      r.total += c.value;
    }
    return r;
  };

  std::optional<MaximizerResult> best;
  for (double omega : omegas) {
    for (double phi : phis) {
      auto r = evaluate(omega, phi, false);
      if (!best || improves(r.total, best->total, tol)) best = std::move(r);
    }
  }
  if (incumbent) {
    auto r = evaluate(incumbent->omega, incumbent->phi, true);
    if (!improves(best->total, r.total, tol)) best = std::move(r);
  }
  return *best;
}

}  // namespace detail

/// Step-wise u maximization with one (omega, phi) shared by all steps, chosen to
/// maximize sum_m max_u H_m. Ties go to the smallest u, then omega, then phi;
/// when `incumbent` is given it is kept unless a grid point beats it.
inline MaximizerResult maximize_hamiltonian(const std::vector<StepHamiltonian>& steps, const ControlGrids& grids,
                                            const MaximizerOptions& opts = {},
                                            const std::optional<MaximizerResult>& incumbent = std::nullopt) {
  if (grids.empty()) throw SolverError("maximize_hamiltonian: empty control grid");
  if (steps.empty()) throw SolverError("maximize_hamiltonian: no steps");
  if (incumbent && incumbent->u.size() != steps.size()) {
    throw DimensionError("maximize_hamiltonian: incumbent length mismatch");
  }
  const MaximizerResult* inc = incumbent ? &*incumbent : nullptr;
  std::vector<std::vector<double>> u_grids(steps.size(), grids.u);
  MaximizerResult best = detail::grid_pass(steps, u_grids, grids.omega, grids.phi, opts.tie_tolerance, inc);
  if (!opts.refine) return best;

  const double du = 0.5 * detail::spacing(grids.u);
  const double dw = 0.5 * detail::spacing(grids.omega);
  const double dp = 0.5 * detail::spacing(grids.phi);
  for (std::size_t m = 0; m < steps.size(); ++m) {
    u_grids[m] = detail::local_grid(best.u[m], du, grids.u.front(), grids.u.back());
  }
  const auto omegas = detail::local_grid(best.omega, dw, grids.omega.front(), grids.omega.back());
  const auto phis = detail::local_grid(best.phi, dp, grids.phi.front() - dp, grids.phi.back() + dp);
  return detail::grid_pass(steps, u_grids, omegas, phis, opts.tie_tolerance, &best);
}

/// Single-step form: argmax over (u, omega, phi) of H at one grid point.
inline ControlPoint maximize_hamiltonian(const DensityMatrix& rho, const CostateMatrix& pi, double mu_bar, double t,
                                         const HamiltonianModel& model, const Channels& channels,
                                         const CoherenceSpec& spec, const ControlGrids& grids,
                                         const MaximizerOptions& opts = {}) {
  const std::vector<StepHamiltonian> steps{StepHamiltonian(rho.matrix(), pi.matrix(), mu_bar, t, model, channels, spec)};
  const auto r = maximize_hamiltonian(steps, grids, opts);
  return {r.u.front(), r.omega, r.phi};
}

/// dF/du_m from the adjoint: integral of dH/du over subinterval m, using the exact
/// in-step flows of rho and pi^dag and 3-point Gauss-Legendre quadrature.
inline std::vector<double> adjoint_control_gradient(const Problem& problem, const ControlSchedule& schedule,
                                                    const Trajectory& traj, const CostateTrajectory& costates,
                                                    const MultiplierTrack& track,
                                                    AdjointMode mode = AdjointMode::derived) {
  const std::size_t n_steps = schedule.steps();
  if (traj.states.size() != n_steps + 1 || costates.costates.size() != n_steps + 1) {
    throw DimensionError("adjoint_control_gradient: trajectory length mismatch");
  }
  const Eigen::Index n = problem.rho0.dim();
  const double h = schedule.step_size();
  const double r = std::sqrt(15.0) / 10.0;
  const std::array<double, 3> nodes{0.5 - r, 0.5, 0.5 + r};
  const std::array<double, 3> weights{5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};

  std::vector<double> grad(n_steps, 0.0);
  for (std::size_t m = 0; m < n_steps; ++m) {
    const ComplexMatrix hm = schedule.hamiltonian(problem.model, m);
    const ComplexMatrix lv = liouvillian(hm, problem.channels);
    const ComplexMatrix gv = adjoint_generator(hm, problem.channels, mode);
    const VecForm rho_m = vectorize(traj.states[m].matrix());
    const VecForm x_next = vectorize(costates.costates[m + 1].matrix().adjoint());
    const double mu_bar = track.mu_bar(m);
    const ControlPoint v{schedule.u[m], schedule.omega, schedule.phi};
    double acc = 0.0;
    for (std::size_t q = 0; q < nodes.size(); ++q) {
      const double c = nodes[q];
      const ComplexMatrix rho = devectorize(matrix_exponential(c * h * lv) * rho_m, n);
      VecForm x = matrix_exponential((1.0 - c) * h * gv) * x_next;
      if (mu_bar != 0.0) {
        x += (1.0 - c) * h *
             vectorize(constraint_source(traj.states[m].matrix(), mu_bar, hm, problem.channels, problem.spec));
      }
      const ComplexMatrix pi = devectorize(x, n).adjoint();
      acc += weights[q] * hamiltonian_u_derivative(rho, pi, mu_bar, v, schedule.time(m), problem.model, problem.spec);
    }
    grad[m] = h * acc;
  }
  return grad;
}

struct SolverConfig {
  std::size_t steps = 50;  ///< N
  std::size_t max_iterations = 200;
  double eps_u = 1e-4;
  double eps_omega = 1e-4;
  double eps_phi = 1e-4;
  MultiplierOptions multipliers;
  ControlGrids grids{ControlGrids::linspace(-1.0, 1.0, 41), ControlGrids::linspace(0.1, 0.5, 21),
                     ControlGrids::phases(16)};
  MaximizerOptions maximizer;
  PropagatorMode propagator = PropagatorMode::product;
  AdjointMode adjoint = AdjointMode::derived;
  TerminalGradientMode terminal_gradient = TerminalGradientMode::analytic;
  double relaxation = 1.0;  ///< theta in (0, 1]: u <- u + theta (u* - u), same for omega, phi
  ControlPoint initial{0.0, 0.3, 0.0};
  StateTolerances state_tolerances;

  void validate() const {
    if (steps < 2) throw SolverError("N must be at least 2");
    if (!(eps_u > 0.0 && eps_omega > 0.0 && eps_phi > 0.0)) throw SolverError("stopping tolerances must be positive");
    if (!(multipliers.eps_act > 0.0)) throw SolverError("activation tolerance must be positive");
    if (grids.empty()) throw SolverError("control grids must be non-empty");
    if (!(relaxation > 0.0 && relaxation <= 1.0)) throw SolverError("relaxation must lie in (0, 1]");
    if (initial.u < grids.u.front() || initial.u > grids.u.back()) {
      throw SolverError("initial amplitude outside the admissible interval");
    }
  }
};

struct IterationRecord {
  std::size_t iteration = 0;  ///< 0 is the initial schedule
  double fidelity = 0.0;
  double max_u_change = 0.0;
  double omega_change = 0.0;
  double phi_change = 0.0;
  double omega = 0.0;
  double phi = 0.0;
  /// Multipliers that produced this iterate's update (empty for the last record).
  std::optional<MultiplierTrack> multipliers;
};

enum class StopReason { converged, max_iterations };

inline const char* to_string(StopReason r) { return r == StopReason::converged ? "converged" : "max_iterations"; }

struct SolveReport {
  double initial_fidelity = 0.0;
  double final_fidelity = 0.0;
  std::size_t iterations = 0;
  StopReason stop_reason = StopReason::max_iterations;
  std::vector<double> fidelity_history;  ///< one entry per iterate, initial first
  std::vector<IterationRecord> history;
  ControlSchedule final_schedule;
  Trajectory final_trajectory;
  ConstraintSummary constraints;
  bool fallback_gradient_used = false;
  double adjoint_discrepancy = 0.0;     ///< max_m ||derived - printed adjoint form||_F on the final schedule
  double max_hamiltonian_imag = 0.0;    ///< largest |Im tr(...)| at the chosen controls
  StateDiagnostics worst_state;         ///< over every trajectory computed
};

namespace detail {

inline void merge(StateDiagnostics& into, const StateDiagnostics& d) {
  into.trace_error = std::max(into.trace_error, d.trace_error);
  into.hermiticity_error = std::max(into.hermiticity_error, d.hermiticity_error);
  into.min_eigenvalue = std::min(into.min_eigenvalue, d.min_eigenvalue);
}

}  // namespace detail

inline ControlSchedule initial_schedule(const SolverConfig& config) {
  return {std::vector<double>(config.steps, config.initial.u), config.initial.omega, config.initial.phi};
}

inline void check_initial_feasibility(const Problem& problem) {
  if (problem.spec.lower_mode != LowerBoundMode::strict) return;
  const auto v = constraint_values(problem.rho0, problem.spec);
  if (!v.feasible()) {
    throw SolverError("initial state violates the coherence bounds (strict lower-bound mode); use grace or disabled");
  }
}

inline SolveReport solve(const Problem& problem, const SolverConfig& config) {
  config.validate();
  problem.spec.validate();
  check_initial_feasibility(problem);

  SolveReport report;
  ControlSchedule schedule = initial_schedule(config);
  auto forward = [&](const ControlSchedule& s) {
    auto t = propagate_forward(problem.rho0, s, problem.model, problem.channels, config.propagator,
                               config.state_tolerances);
    detail::merge(report.worst_state, t.worst);
    return t;
  };
  report.worst_state = diagnose_state(problem.rho0.matrix());

  Trajectory traj = forward(schedule);
  report.initial_fidelity = fidelity(traj.final_state(), problem.target.sigma);
  report.fidelity_history.push_back(report.initial_fidelity);
  report.history.push_back({0, report.initial_fidelity, 0.0, 0.0, 0.0, schedule.omega, schedule.phi, std::nullopt});

  const std::size_t n_steps = config.steps;
  while (report.iterations < config.max_iterations) {
    const auto terminal = terminal_costate(traj.final_state(), problem.target, config.terminal_gradient);
    report.fallback_gradient_used = report.fallback_gradient_used || terminal.fallback;
    auto track = build_multiplier_track(traj, problem.spec, config.multipliers);
    const auto costates = propagate_backward(CostateMatrix(terminal.pi), traj, track, schedule, problem.model,
                                             problem.channels, problem.spec, config.adjoint);

    std::vector<StepHamiltonian> steps;
    steps.reserve(n_steps);
    for (std::size_t m = 0; m < n_steps; ++m) {
      steps.emplace_back(traj.states[m].matrix(), costates.costates[m].matrix(), track.mu_bar(m), schedule.time(m),
                         problem.model, problem.channels, problem.spec);
    }
    std::optional<MaximizerResult> incumbent;
    if (config.maximizer.prefer_incumbent) incumbent = MaximizerResult{schedule.u, schedule.omega, schedule.phi, 0.0};
    const auto best = maximize_hamiltonian(steps, config.grids, config.maximizer, incumbent);
    for (std::size_t m = 0; m < n_steps; ++m) {
      const double im = steps[m].trace(best.u[m], best.omega, best.phi).imag();
      report.max_hamiltonian_imag = std::max(report.max_hamiltonian_imag, std::abs(im));
    }

    const double theta = config.relaxation;
    ControlSchedule next = schedule;
    double du = 0.0;
    for (std::size_t m = 0; m < n_steps; ++m) {
      next.u[m] = schedule.u[m] + theta * (best.u[m] - schedule.u[m]);
      du = std::max(du, std::abs(next.u[m] - schedule.u[m]));
    }
    next.omega = schedule.omega + theta * (best.omega - schedule.omega);
    next.phi = schedule.phi + theta * (best.phi - schedule.phi);
    const double dw = std::abs(next.omega - schedule.omega);
    const double dp = std::abs(next.phi - schedule.phi);

    report.history.back().multipliers = std::move(track);
    traj = forward(next);
    schedule = std::move(next);
    ++report.iterations;
    const double f = fidelity(traj.final_state(), problem.target.sigma);
    report.fidelity_history.push_back(f);
    report.history.push_back({report.iterations, f, du, dw, dp, schedule.omega, schedule.phi, std::nullopt});

    if (du < config.eps_u && dw < config.eps_omega && dp < config.eps_phi) {
      report.stop_reason = StopReason::converged;
      break;
    }
  }

  report.final_fidelity = report.fidelity_history.back();
  report.final_schedule = schedule;
  report.constraints = summarize_constraints(traj, problem.spec, config.multipliers.eps_act);
  for (std::size_t m = 0; m < n_steps; ++m) {
    report.adjoint_discrepancy = std::max(
        report.adjoint_discrepancy, adjoint_generator(schedule.hamiltonian(problem.model, m), problem.channels).discrepancy());
  }
  report.final_trajectory = std::move(traj);
  return report;
}

}  // namespace qpmp
