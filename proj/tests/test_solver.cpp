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

#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

namespace qpmp {
namespace {

using testing::max_abs;
using testing::Rng;

struct Instance {
  lambda::LambdaAtomModel atom;
  HamiltonianModel model = lambda::hamiltonian_model(atom);
  Channels channels = lambda::channels(atom);
  CoherenceSpec spec{lambda::coherence_operators(), 1.0, 0.5};
};

TEST(PontryaginHamiltonian, ZeroCostateGivesZero) {
  Instance in;
  Rng rng(70);
  const DensityMatrix rho(testing::random_density(3, rng));
  const CostateMatrix zero(ComplexMatrix::Zero(3, 3));
  for (int trial = 0; trial < 10; ++trial) {
    const ControlPoint v{rng.uniform(), rng.uniform(0.1, 0.5), rng.uniform(0.0, 6.0)};
    EXPECT_EQ(pontryagin_hamiltonian(rho, zero, 0.0, v, rng.uniform(0.0, 1.0), in.model, in.channels, in.spec), 0.0);
  }
}

TEST(PontryaginHamiltonian, IdentityCostatePairsWithTracelessRhs) {
  Instance in;
  Rng rng(71);
  const CostateMatrix id(ComplexMatrix::Identity(3, 3));
  for (int trial = 0; trial < 20; ++trial) {
    const DensityMatrix rho(testing::random_density(3, rng));
    const ControlPoint v{rng.uniform(), rng.uniform(0.1, 0.5), rng.uniform(0.0, 6.0)};
    EXPECT_LE(std::abs(pontryagin_hamiltonian(rho, id, 0.0, v, 0.4, in.model, in.channels, in.spec)), 1e-13);
  }
}

TEST(PontryaginHamiltonian, MultiplierFormsAgree) {
  Instance in;
  Rng rng(72);
  for (int trial = 0; trial < 50; ++trial) {
    const DensityMatrix rho(testing::random_density(3, rng));
    const CostateMatrix pi(testing::random_matrix(3, rng));
    const double mu1 = rng.uniform(0.0, 2.0), mu2 = rng.uniform(0.0, 2.0);
    const ControlPoint v{rng.uniform(), rng.uniform(0.1, 0.5), rng.uniform(0.0, 6.0)};
    const double t = rng.uniform(0.0, 1.0);
    const double a = pontryagin_hamiltonian(rho, pi, 2.0 * (mu1 - mu2), v, t, in.model, in.channels, in.spec);
    const double b = extended_hamiltonian(rho, pi, mu1, mu2, v, t, in.model, in.channels, in.spec);
    EXPECT_LE(std::abs(a - b), 1e-13);
  }
}

TEST(PontryaginHamiltonian, AffineInAmplitude) {
  Instance in;
  Rng rng(73);
  for (int trial = 0; trial < 20; ++trial) {
    const ComplexMatrix rho = testing::random_density(3, rng);
    const ComplexMatrix pi = testing::random_matrix(3, rng);
    const StepHamiltonian h(rho, pi, rng.uniform(), 0.3, in.model, in.channels, in.spec);
    const double w = rng.uniform(0.1, 0.5), p = rng.uniform(0.0, 6.0), u = rng.uniform();
    EXPECT_NEAR(h(u, w, p), h(0.0, w, p) + u * (h(1.0, w, p) - h(0.0, w, p)), 1e-13);
  }
}

TEST(PontryaginHamiltonian, AmplitudeDerivative) {
  Instance in;
  Rng rng(74);
  for (int trial = 0; trial < 20; ++trial) {
    const ComplexMatrix rho = testing::random_density(3, rng);
    const ComplexMatrix pi = testing::random_matrix(3, rng);
    const double mu_bar = rng.uniform();
    const ControlPoint v{rng.uniform(), rng.uniform(0.1, 0.5), rng.uniform(0.0, 6.0)};
    const StepHamiltonian h(rho, pi, mu_bar, 0.7, in.model, in.channels, in.spec);
    const double fd = (h(v.u + 1e-6, v.omega, v.phi) - h(v.u - 1e-6, v.omega, v.phi)) / 2e-6;
    EXPECT_NEAR(hamiltonian_u_derivative(rho, pi, mu_bar, v, 0.7, in.model, in.spec), fd, 1e-8);
  }
}

TEST(PontryaginHamiltonian, DimensionMismatch) {
  Instance in;
  const DensityMatrix two(ComplexMatrix::Identity(2, 2) * 0.5);
  const CostateMatrix pi(ComplexMatrix::Zero(3, 3));
  EXPECT_THROW(pontryagin_hamiltonian(two, pi, 0.0, {}, 0.0, in.model, in.channels, in.spec), DimensionError);
}

TEST(ControlGrids, Construction) {
  const auto u = ControlGrids::linspace(-1.0, 1.0, 41);
  EXPECT_EQ(u.size(), 41u);
  EXPECT_EQ(u.front(), -1.0);
  EXPECT_EQ(u.back(), 1.0);
  EXPECT_EQ(u[20], 0.0);
  const auto p = ControlGrids::phases(16);
  EXPECT_EQ(p.front(), 0.0);
  EXPECT_LT(p.back(), 2.0 * std::numbers::pi);
  const ControlGrids g({0.5, -0.5}, {0.3}, {1.0, 0.0});
  EXPECT_EQ(g.u.front(), -0.5);
  EXPECT_EQ(g.phi.front(), 0.0);
  EXPECT_TRUE(ControlGrids({}, {0.3}, {0.0}).empty());
}

TEST(Maximizer, FlatObjectiveReturnsGridMinima) {
  Instance in;
  Rng rng(75);
  const DensityMatrix rho(testing::random_density(3, rng));
  const CostateMatrix zero(ComplexMatrix::Zero(3, 3));
  const ControlGrids grids(ControlGrids::linspace(-1, 1, 5), ControlGrids::linspace(0.1, 0.5, 3),
                           ControlGrids::phases(4));
  const auto v = maximize_hamiltonian(rho, zero, 0.0, 0.2, in.model, in.channels, in.spec, grids);
  EXPECT_EQ(v, (ControlPoint{-1.0, 0.1, 0.0}));
}

TEST(Maximizer, SinglePointGrids) {
  Instance in;
  Rng rng(76);
  const DensityMatrix rho(testing::random_density(3, rng));
  const CostateMatrix pi(testing::random_matrix(3, rng));
  const ControlGrids grids({0.25}, {0.33}, {1.5});
  EXPECT_EQ(maximize_hamiltonian(rho, pi, 0.4, 0.2, in.model, in.channels, in.spec, grids),
            (ControlPoint{0.25, 0.33, 1.5}));
}

TEST(Maximizer, EmptyGridIsAnError) {
  Instance in;
  const CostateMatrix pi(ComplexMatrix::Zero(3, 3));
  EXPECT_THROW(maximize_hamiltonian(lambda::excited_state(), pi, 0.0, 0.0, in.model, in.channels, in.spec,
                                    ControlGrids({}, {0.3}, {0.0})),
               SolverError);
}

// Exhaustive oracle: full evaluation of H at every grid point, first strict maximum wins.
ControlPoint brute_force(const StepHamiltonian& h, const ControlGrids& g) {
  ControlPoint best{g.u[0], g.omega[0], g.phi[0]};
  double best_value = h(best);
  for (double u : g.u)
    for (double w : g.omega)
      for (double p : g.phi) {
        const double v = h(u, w, p);
        if (v > best_value) {
          best_value = v;
          best = {u, w, p};
        }
      }
  // order of preference: smallest u, then omega, then phi, among exact maxima
  for (double u : g.u)
    for (double w : g.omega)
      for (double p : g.phi)
        if (h(u, w, p) == best_value) return {u, w, p};
  return best;
}

TEST(Maximizer, MatchesExhaustiveSearchSingleStep) {
  Instance in;
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const DensityMatrix rho(testing::random_density(3, rng));
    const CostateMatrix pi(testing::random_matrix(3, rng));
    const double mu_bar = rng.uniform();
    const double t = rng.uniform(0.0, 1.0);
    const ControlGrids grids(ControlGrids::linspace(-1, 1, 3), {rng.uniform(0.1, 0.5), rng.uniform(0.1, 0.5), 0.3},
                             ControlGrids::phases(3));
    const StepHamiltonian h(rho.matrix(), pi.matrix(), mu_bar, t, in.model, in.channels, in.spec);
    EXPECT_EQ(maximize_hamiltonian(rho, pi, mu_bar, t, in.model, in.channels, in.spec, grids), brute_force(h, grids));
  }
}

TEST(Maximizer, MatchesExhaustiveSearchAggregated) {
  Instance in;
  Rng rng(78);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<StepHamiltonian> steps;
    for (int m = 0; m < 4; ++m) {
      steps.emplace_back(testing::random_density(3, rng), testing::random_matrix(3, rng), rng.uniform(), m / 4.0,
                         in.model, in.channels, in.spec);
    }
    const ControlGrids grids(ControlGrids::linspace(-1, 1, 3), ControlGrids::linspace(0.1, 0.5, 3),
                             ControlGrids::phases(3));
    double best_total = -1e300;
    MaximizerResult oracle;
    for (double w : grids.omega) {
      for (double p : grids.phi) {
        MaximizerResult r{{}, w, p, 0.0};
        for (const auto& h : steps) {
          double bu = grids.u[0], bv = h(bu, w, p);
          for (double u : grids.u) {
            if (h(u, w, p) > bv + 1e-12) {
              bu = u;
              bv = h(u, w, p);
            }
          }
          r.u.push_back(bu);
          r.total += bv;
        }
        if (r.total > best_total + 1e-12) {
          best_total = r.total;
          oracle = r;
        }
      }
    }
    const auto got = maximize_hamiltonian(steps, grids);
    EXPECT_EQ(got.u, oracle.u);
    EXPECT_EQ(got.omega, oracle.omega);
    EXPECT_EQ(got.phi, oracle.phi);
  }
}

TEST(Maximizer, RefinementNeverLowersTheTotal) {
  Instance in;
  Rng rng(79);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<StepHamiltonian> steps;
    for (int m = 0; m < 5; ++m) {
      steps.emplace_back(testing::random_density(3, rng), testing::random_matrix(3, rng), 0.0, m / 5.0, in.model,
                         in.channels, in.spec);
    }
    const ControlGrids grids(ControlGrids::linspace(-1, 1, 5), ControlGrids::linspace(0.1, 0.5, 5),
                             ControlGrids::phases(4));
    MaximizerOptions refine;
    refine.refine = true;
    const auto coarse = maximize_hamiltonian(steps, grids);
    const auto fine = maximize_hamiltonian(steps, grids, refine);
    EXPECT_GE(fine.total, coarse.total - 1e-12);
    for (double u : fine.u) {
      EXPECT_GE(u, -1.0);
      EXPECT_LE(u, 1.0);
    }
  }
}

TEST(Maximizer, IncumbentKeptOnTies) {
  Instance in;
  const StepHamiltonian flat(lambda::excited_state().matrix(), ComplexMatrix::Zero(3, 3), 0.0, 0.0, in.model,
                             in.channels, in.spec);
  const ControlGrids grids(ControlGrids::linspace(-1, 1, 5), {0.1, 0.3}, {0.0, 1.0});
  const MaximizerResult incumbent{{0.5}, 0.3, 1.0, 0.0};
  const auto r = maximize_hamiltonian({flat}, grids, {}, incumbent);
  EXPECT_EQ(r.u, std::vector<double>{0.5});
  EXPECT_EQ(r.omega, 0.3);
  EXPECT_EQ(r.phi, 1.0);
}

// Central finite difference of the final fidelity with respect to u_m.
double fd_derivative(const Problem& p, const ControlSchedule& s, std::size_t m, double step) {
  auto f = [&](double du) {
    ControlSchedule x = s;
    x.u[m] += du;
    return uhlmann_fidelity(propagate_forward(p.rho0, x, p.model, p.channels).final_state().matrix(),
                            p.target.sigma.matrix());
  };
  return (f(step) - f(-step)) / (2.0 * step);
}

TEST(AdjointGradient, MatchesFiniteDifferences) {
  Rng rng(80);
  const Problem p = lambda::default_problem(1.0, 1.0, 0.5);
  const auto s = testing::random_schedule(20, rng);
  const auto traj = propagate_forward(p.rho0, s, p.model, p.channels);
  const auto terminal = terminal_costate(traj.final_state(), p.target);
  const auto track = MultiplierTrack::zeros(20);
  const auto costates = propagate_backward(CostateMatrix(terminal.pi), traj, track, s, p.model, p.channels, p.spec);
  const auto grad = adjoint_control_gradient(p, s, traj, costates, track);
  for (std::size_t m = 0; m < 20; ++m) {
    const double fd = fd_derivative(p, s, m, 1e-5);
    EXPECT_LE(std::abs(grad[m] - fd), 1e-3 * std::abs(fd) + 1e-8) << m;
  }
}

TEST(SolverConfig, Validation) {
  SolverConfig c;
  EXPECT_NO_THROW(c.validate());
  c.steps = 1;
  EXPECT_THROW(c.validate(), SolverError);
  c = {};
  c.eps_phi = 0.0;
  EXPECT_THROW(c.validate(), SolverError);
  c = {};
  c.relaxation = 1.5;
  EXPECT_THROW(c.validate(), SolverError);
  c = {};
  c.initial.u = 2.0;
  EXPECT_THROW(c.validate(), SolverError);
  c = {};
  c.grids.omega.clear();
  EXPECT_THROW(c.validate(), SolverError);
}

TEST(Solve, ZeroIterationsReportsInitialSchedule) {
  const Problem p = lambda::default_problem(std::numbers::pi / 2, 1.0, 0.5);
  SolverConfig c;
  c.max_iterations = 0;
  const auto r = solve(p, c);
  EXPECT_EQ(r.iterations, 0u);
  EXPECT_EQ(r.stop_reason, StopReason::max_iterations);
  EXPECT_EQ(r.final_schedule, initial_schedule(c));
  EXPECT_EQ(r.fidelity_history.size(), 1u);
  EXPECT_EQ(r.final_fidelity, r.initial_fidelity);
  EXPECT_NEAR(r.initial_fidelity, 1.0 - std::exp(-0.101) - 0.001 / 0.101 * (1.0 - std::exp(-0.101)), 1e-12);
}

Problem self_consistent_problem(const SolverConfig& c) {
  Problem p = lambda::default_problem(std::numbers::pi / 2, 1.0, 0.5);
  const auto traj = propagate_forward(p.rho0, initial_schedule(c), p.model, p.channels);
  return {p.model, p.channels, p.spec, p.rho0, TargetState(traj.final_state())};
}

TEST(Solve, SelfConsistentTargetStopsAtFirstIterationWithIncumbentPreference) {
  SolverConfig c;
  c.maximizer.prefer_incumbent = true;
  const auto r = solve(self_consistent_problem(c), c);
  EXPECT_NEAR(r.initial_fidelity, 1.0, 1e-10);
  EXPECT_EQ(r.stop_reason, StopReason::converged);
  EXPECT_EQ(r.iterations, 1u);
  EXPECT_EQ(r.final_schedule, initial_schedule(c));
}

TEST(Solve, SelfConsistentTargetStopsAtFirstIterationFromGridMinima) {
  SolverConfig c;
  c.initial = {c.grids.u.front(), c.grids.omega.front(), c.grids.phi.front()};
  const auto r = solve(self_consistent_problem(c), c);
  EXPECT_EQ(r.stop_reason, StopReason::converged);
  EXPECT_EQ(r.iterations, 1u);
}

TEST(Solve, StrictModeRejectsInfeasibleStart) {
  EXPECT_THROW(lambda::default_problem(1.0, 1.0, 0.5, LowerBoundMode::strict), SolverError);
}

TEST(Solve, DeskScaleRunImprovesAndIsDeterministic) {
  const Problem p = lambda::default_problem(std::numbers::pi / 2, 1.0, 0.5);
  const SolverConfig c;
  const auto a = solve(p, c);
  const auto b = solve(p, c);
  EXPECT_LE(a.iterations, 200u);
  EXPECT_GE(a.final_fidelity, a.initial_fidelity);
  EXPECT_TRUE(a.worst_state.within({}));
  for (double f : a.fidelity_history) {
    EXPECT_GE(f, 0.0);
    EXPECT_LE(f, 1.0);
  }
  EXPECT_NEAR(a.final_fidelity, fidelity(a.final_trajectory.final_state(), p.target.sigma), 1e-12);
  const auto recomputed = propagate_forward(p.rho0, a.final_schedule, p.model, p.channels);
  EXPECT_NEAR(a.final_fidelity, uhlmann_fidelity(recomputed.final_state().matrix(), p.target.sigma.matrix()), 1e-12);
  EXPECT_EQ(a.fidelity_history, b.fidelity_history);
  EXPECT_EQ(a.final_schedule, b.final_schedule);
  EXPECT_GT(a.adjoint_discrepancy, 0.0);
  EXPECT_FALSE(a.fallback_gradient_used);
  EXPECT_LE(a.max_hamiltonian_imag, 1e-8);
}

TEST(Solve, StoppingTestNeedsAllThreeTolerances) {
  const Problem p = lambda::default_problem(std::numbers::pi / 2, 1.0, 0.5);
  SolverConfig c;
  c.max_iterations = 10;
  const auto r = solve(p, c);
  for (std::size_t i = 1; i + 1 < r.history.size(); ++i) {
    const auto& h = r.history[i];
    EXPECT_FALSE(h.max_u_change < c.eps_u && h.omega_change < c.eps_omega && h.phi_change < c.eps_phi);
  }
  if (r.stop_reason == StopReason::converged) {
    const auto& last = r.history.back();
    EXPECT_LT(last.max_u_change, c.eps_u);
    EXPECT_LT(last.omega_change, c.eps_omega);
    EXPECT_LT(last.phi_change, c.eps_phi);
  }
}

TEST(Solve, RelaxationDampsTheUpdate) {
  const Problem p = lambda::default_problem(std::numbers::pi / 2, 1.0, 0.5);
  SolverConfig c;
  c.max_iterations = 1;
  c.relaxation = 0.5;
  const auto r = solve(p, c);
  ASSERT_EQ(r.history.size(), 2u);
  EXPECT_DOUBLE_EQ(r.history[1].max_u_change, 0.5);
  EXPECT_DOUBLE_EQ(r.final_schedule.omega, 0.3 + 0.5 * (0.1 - 0.3));
}

TEST(Solve, ActiveUpperBoundBuildsMultipliers) {
  // A tight upper bound the unconstrained optimum would cross.
  const Problem p = lambda::default_problem(std::numbers::pi / 2, 0.6, 0.5, LowerBoundMode::disabled);
  SolverConfig c;
  c.max_iterations = 5;
  c.multipliers.eps_act = 0.05;
  const auto r = solve(p, c);
  bool saw_positive = false;
  for (const auto& h : r.history) {
    if (!h.multipliers) continue;
    for (std::size_t m = 0; m + 1 < h.multipliers->mu1.size(); ++m) {
      EXPECT_GE(h.multipliers->mu1[m], h.multipliers->mu1[m + 1]);
      saw_positive = saw_positive || h.multipliers->mu1[m] > 0.0;
    }
  }
  EXPECT_TRUE(saw_positive);
}

}  // namespace
}  // namespace qpmp
