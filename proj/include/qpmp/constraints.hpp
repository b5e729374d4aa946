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

// Coherence bounds alpha*c0 <= C(rho) <= c0 with C(rho)^2 = sum_i tr(M_i rho)^2,
// handled in squared form, and the piecewise-constant multipliers attached to them.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "qpmp/dynamics.hpp"
#include "qpmp/matrixcore.hpp"

namespace qpmp {

/// How the lower coherence bound is enforced.
enum class LowerBoundMode {
  strict,    ///< from t = 0; an infeasible initial state is an error
  grace,     ///< only after the coherence first reaches alpha * c0
  disabled,  ///< no lower bound (alpha * c0 = 0)
};

struct CoherenceSpec {
  std::vector<ComplexMatrix> ops;  ///< Hermitian observables M_i
  double c0 = 1.0;
  double alpha = 0.5;
  LowerBoundMode lower_mode = LowerBoundMode::grace;

  CoherenceSpec() = default;
  CoherenceSpec(std::vector<ComplexMatrix> m, double c0_, double alpha_, LowerBoundMode mode = LowerBoundMode::grace)
      : ops(std::move(m)), c0(c0_), alpha(alpha_), lower_mode(mode) {
    validate();
  }

  void validate() const {
    for (const auto& m : ops) {
      require_square(m, "coherence operator");
      if (hermiticity_error(m) > 1e-12) throw InvalidStateError("coherence operator is not Hermitian");
    }
    if (!(c0 > 0.0)) throw InvalidStateError("c0 must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidStateError("alpha must lie in (0, 1)");
  }

  double upper_bound_sq() const { return c0 * c0; }
  /// Zero when the lower bound is disabled.
  double lower_bound_sq() const {
    return lower_mode == LowerBoundMode::disabled ? 0.0 : alpha * alpha * c0 * c0;
  }
};

namespace detail {

inline std::vector<double> expectations(const ComplexMatrix& rho, const CoherenceSpec& spec) {
  std::vector<double> out;
  out.reserve(spec.ops.size());
  for (const auto& m : spec.ops) {
    require_same_dim(rho, m, "coherence");
    out.push_back(trace_pairing(m, rho));
  }
  return out;
}

}  // namespace detail

inline double coherence_squared(const ComplexMatrix& rho, const CoherenceSpec& spec) {
  double s = 0.0;
  for (double e : detail::expectations(rho, spec)) s += e * e;
  return s;
}

inline double coherence_squared(const DensityMatrix& rho, const CoherenceSpec& spec) {
  return coherence_squared(rho.matrix(), spec);
}

inline double coherence(const DensityMatrix& rho, const CoherenceSpec& spec) {
  return std::sqrt(coherence_squared(rho, spec));
}

/// (C^2 - c0^2, alpha^2 c0^2 - C^2); feasible iff both are <= 0.
struct ConstraintValues {
  double upper;
  double lower;

  bool feasible() const { return upper <= 0.0 && lower <= 0.0; }
};

inline ConstraintValues constraint_values(double coherence_sq, const CoherenceSpec& spec) {
  return {coherence_sq - spec.upper_bound_sq(), spec.lower_bound_sq() - coherence_sq};
}

inline ConstraintValues constraint_values(const DensityMatrix& rho, const CoherenceSpec& spec) {
  return constraint_values(coherence_squared(rho, spec), spec);
}

/// 2 sum_i tr(M_i rho) M_i.
inline ComplexMatrix coherence_gradient(const ComplexMatrix& rho, const CoherenceSpec& spec) {
  ComplexMatrix g = ComplexMatrix::Zero(rho.rows(), rho.cols());
  const auto e = detail::expectations(rho, spec);
  for (std::size_t i = 0; i < spec.ops.size(); ++i) g += (2.0 * e[i]) * spec.ops[i];
  return g;
}

inline ComplexMatrix coherence_gradient(const DensityMatrix& rho, const CoherenceSpec& spec) {
  return coherence_gradient(rho.matrix(), spec);
}

/// sum_i tr(M_i rho) M_i, i.e. half the coherence gradient.
inline ComplexMatrix coherence_direction(const ComplexMatrix& rho, const CoherenceSpec& spec) {
  return 0.5 * coherence_gradient(rho, spec);
}

enum class ConstraintActivity { inactive, upper_active, lower_active };

inline const char* to_string(ConstraintActivity a) {
  switch (a) {
    case ConstraintActivity::upper_active:
      return "upper";
    case ConstraintActivity::lower_active:
      return "lower";
    case ConstraintActivity::inactive:
      break;
  }
  return "inactive";
}

struct MultiplierTrack {
  std::vector<double> mu1;                  ///< upper-bound multiplier on t_0..t_N
  std::vector<double> mu2;                  ///< lower-bound multiplier on t_0..t_N
  std::vector<ConstraintActivity> activity;  ///< per grid point

  static MultiplierTrack zeros(std::size_t n_steps) {
    return {std::vector<double>(n_steps + 1, 0.0), std::vector<double>(n_steps + 1, 0.0),
            std::vector<ConstraintActivity>(n_steps + 1, ConstraintActivity::inactive)};
  }

  std::size_t steps() const noexcept { return mu1.empty() ? 0 : mu1.size() - 1; }
  /// 2 (mu1 - mu2) at grid point m.
  double mu_bar(std::size_t m) const { return 2.0 * (mu1[m] - mu2[m]); }
};

enum class IncrementRule {
  frobenius,  ///< (1/N) ||grad C^2(rho_m)||_F
  fixed,      ///< (1/N) * fixed_step
  rate,       ///< (1/N) |Re tr(grad C^2(rho_m) drho_m/dt)|, needs a rate callback
};

struct MultiplierOptions {
  /// Relative activation band: |C^2 - bound| <= eps_act * bound counts as active.
  double eps_act = 1e-6;
  IncrementRule rule = IncrementRule::frobenius;
  double fixed_step = 1.0;
  /// drho/dt at grid point m; required by IncrementRule::rate.
  std::function<ComplexMatrix(std::size_t m)> rate;
};

/// Grid points at which the lower bound is in force.
inline std::vector<bool> lower_bound_enforced(const Trajectory& traj, const CoherenceSpec& spec, double eps_act) {
  std::vector<bool> on(traj.states.size(), false);
  if (spec.lower_mode == LowerBoundMode::disabled) return on;
  const double bound = spec.lower_bound_sq();
  bool reached = spec.lower_mode == LowerBoundMode::strict;
  for (std::size_t m = 0; m < on.size(); ++m) {
    if (!reached && coherence_squared(traj.states[m], spec) >= bound * (1.0 - eps_act)) reached = true;
    on[m] = reached;
  }
  return on;
}

/// Activity of grid point m. A violated bound counts as active too.
inline ConstraintActivity classify(double coherence_sq, const CoherenceSpec& spec, bool lower_on, double eps_act) {
  const double upper = spec.upper_bound_sq();
  if (coherence_sq >= upper - eps_act * upper) return ConstraintActivity::upper_active;
  if (lower_on) {
    const double lower = spec.lower_bound_sq();
    if (coherence_sq <= lower + eps_act * lower) return ConstraintActivity::lower_active;
  }
  return ConstraintActivity::inactive;
}

/// One backward step: derives mu_{m-1} from mu_m using the state at grid point m.
/// An inactive point carries the multipliers unchanged; an active one adds a
/// non-negative increment to the matching multiplier.
inline void update_multipliers(MultiplierTrack& track, const Trajectory& traj, const CoherenceSpec& spec,
                               std::size_t m, bool lower_on, const MultiplierOptions& opts = {}) {
  const std::size_t n_steps = track.steps();
  if (m == 0 || m > n_steps || traj.states.size() != n_steps + 1) {
    throw DimensionError("update_multipliers: step index or trajectory length out of range");
  }
  const DensityMatrix& rho = traj.states[m];
  const double csq = coherence_squared(rho, spec);
  const ConstraintActivity act = classify(csq, spec, lower_on, opts.eps_act);
  track.activity[m] = act;
  track.mu1[m - 1] = track.mu1[m];
  track.mu2[m - 1] = track.mu2[m];
  if (act == ConstraintActivity::inactive) return;

  const double h = 1.0 / static_cast<double>(n_steps);
  double delta = 0.0;
  switch (opts.rule) {
    case IncrementRule::frobenius:
      delta = h * coherence_gradient(rho, spec).norm();
      break;
    case IncrementRule::fixed:
      delta = h * opts.fixed_step;
      break;
    case IncrementRule::rate:
      if (!opts.rate) throw SolverError("update_multipliers: rate increment requires a rate callback");
      delta = h * std::abs(trace_pairing(coherence_gradient(rho, spec), opts.rate(m)));
      break;
  }
  if (!(delta >= 0.0) || !std::isfinite(delta)) throw SolverError("update_multipliers: invalid increment");
  if (act == ConstraintActivity::upper_active) {
    track.mu1[m - 1] += delta;
  } else {
    track.mu2[m - 1] += delta;
  }
  if (track.mu1[m - 1] < 0.0 || track.mu2[m - 1] < 0.0) throw SolverError("update_multipliers: negative multiplier");
}

/// Full backward sweep from mu_{1,N} = mu_{2,N} = 0.
inline MultiplierTrack build_multiplier_track(const Trajectory& traj, const CoherenceSpec& spec,
                                              const MultiplierOptions& opts = {}) {
  const std::size_t n_steps = traj.steps();
  MultiplierTrack track = MultiplierTrack::zeros(n_steps);
  const auto lower_on = lower_bound_enforced(traj, spec, opts.eps_act);
  for (std::size_t m = n_steps; m >= 1; --m) update_multipliers(track, traj, spec, m, lower_on[m], opts);
  track.activity[0] = classify(coherence_squared(traj.states[0], spec), spec, lower_on[0], opts.eps_act);
  return track;
}

struct ConstraintSummary {
  double max_upper_violation = 0.0;  ///< max(0, C^2 - c0^2)
  double max_lower_violation = 0.0;  ///< max(0, alpha^2 c0^2 - C^2) where the lower bound is in force
  std::size_t violating_points = 0;
  std::size_t upper_active_points = 0;
  std::size_t lower_active_points = 0;
};

inline ConstraintSummary summarize_constraints(const Trajectory& traj, const CoherenceSpec& spec, double eps_act) {
  ConstraintSummary s;
  const auto lower_on = lower_bound_enforced(traj, spec, eps_act);
  for (std::size_t m = 0; m < traj.states.size(); ++m) {
    const double csq = coherence_squared(traj.states[m], spec);
    const auto v = constraint_values(csq, spec);
    const double up = std::max(0.0, v.upper);
    const double lo = lower_on[m] ? std::max(0.0, v.lower) : 0.0;
    s.max_upper_violation = std::max(s.max_upper_violation, up);
    s.max_lower_violation = std::max(s.max_lower_violation, lo);
    if (up > eps_act * spec.upper_bound_sq() || lo > eps_act * spec.lower_bound_sq()) ++s.violating_points;
    switch (classify(csq, spec, lower_on[m], eps_act)) {
      case ConstraintActivity::upper_active:
        ++s.upper_active_points;
        break;
      case ConstraintActivity::lower_active:
        ++s.lower_active_points;
        break;
      case ConstraintActivity::inactive:
        break;
    }
  }
  return s;
}

}  // namespace qpmp
