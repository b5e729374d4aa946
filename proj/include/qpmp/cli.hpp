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

// Runner behind the qpmp command-line tool. Artifacts are rendered in memory,
// written to temporaries and renamed into place only when every file succeeded.

#pragma once

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "qpmp/errors.hpp"
#include "qpmp/run_config.hpp"

namespace qpmp {

class IoError : public Error {
 public:
  using Error::Error;
};

enum class RunMode { solve, propagate, check };

inline RunMode parse_run_mode(const std::string& s) {
  if (s == "solve") return RunMode::solve;
  if (s == "propagate") return RunMode::propagate;
  if (s == "check") return RunMode::check;
  throw ConfigError("mode", "expected solve, propagate or check, got \"" + s + "\"");
}

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitSolver = 3;
inline constexpr int kExitIo = 4;

/// %.12g, the precision of every delimited table.
inline std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

/// Named text files committed together.
class ArtifactSet {
 public:
  void add(std::string name, std::string content) { files_.emplace_back(std::move(name), std::move(content)); }
  const std::vector<std::pair<std::string, std::string>>& files() const noexcept { return files_; }

  void commit(const std::filesystem::path& dir) const {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());

    std::vector<fs::path> temps;
    auto cleanup = [&] {
      for (const auto& t : temps) fs::remove(t, ec);
    };
    for (const auto& [name, content] : files_) {
      const fs::path tmp = dir / ("." + name + ".tmp");
      temps.push_back(tmp);
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << content;
      out.close();
      if (!out) {
        cleanup();
        throw IoError("cannot write " + tmp.string());
      }
    }
    for (std::size_t i = 0; i < files_.size(); ++i) {
      fs::rename(temps[i], dir / files_[i].first, ec);
      if (ec) {
        cleanup();
        throw IoError("cannot rename " + temps[i].string() + ": " + ec.message());
      }
    }
  }

 private:
  std::vector<std::pair<std::string, std::string>> files_;
};

namespace detail {

inline std::string join_row(const std::vector<double>& row) {
  std::string s;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) s += ',';
    s += format_number(row[i]);
  }
  return s + '\n';
}

inline std::vector<std::string> entry_columns(const char* prefix, Eigen::Index n) {
  std::vector<std::string> cols;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      cols.push_back(std::string("re_") + prefix + std::to_string(i) + std::to_string(j));
      cols.push_back(std::string("im_") + prefix + std::to_string(i) + std::to_string(j));
    }
  }
  return cols;
}

inline void append_entries(std::vector<double>& row, const ComplexMatrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      row.push_back(m(i, j).real());
      row.push_back(m(i, j).imag());
    }
  }
}

// u at grid point m; the last point repeats the final step's amplitude.
inline double control_at(const ControlSchedule& s, std::size_t m) { return s.u[std::min(m, s.u.size() - 1)]; }

}  // namespace detail

/// t, u, populations, C^2, then Re/Im of every density-matrix entry (row-major).
inline std::string trajectory_csv(const Trajectory& traj, const ControlSchedule& schedule, const CoherenceSpec& spec) {
  const Eigen::Index n = traj.states.front().dim();
  std::string out = "t,u";
  for (Eigen::Index i = 0; i < n; ++i) out += ",pop_" + std::to_string(i);
  out += ",coherence_sq";
  for (const auto& c : detail::entry_columns("rho_", n)) out += "," + c;
  out += '\n';
  for (std::size_t m = 0; m < traj.states.size(); ++m) {
    const ComplexMatrix& rho = traj.states[m].matrix();
    std::vector<double> row{static_cast<double>(m) * schedule.step_size(), detail::control_at(schedule, m)};
    for (Eigen::Index i = 0; i < n; ++i) row.push_back(rho(i, i).real());
    row.push_back(coherence_squared(rho, spec));
    detail::append_entries(row, rho);
    out += detail::join_row(row);
  }
  return out;
}

inline nlohmann::ordered_json trajectory_json(const Trajectory& traj, const ControlSchedule& schedule,
                                              const CoherenceSpec& spec) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t m = 0; m < traj.states.size(); ++m) {
    const ComplexMatrix& rho = traj.states[m].matrix();
    nlohmann::ordered_json re = nlohmann::ordered_json::array();
    nlohmann::ordered_json im = nlohmann::ordered_json::array();
    std::vector<double> pops;
    for (Eigen::Index i = 0; i < rho.rows(); ++i) {
      std::vector<double> r, c;
      for (Eigen::Index j = 0; j < rho.cols(); ++j) {
        r.push_back(rho(i, j).real());
        c.push_back(rho(i, j).imag());
      }
      re.push_back(r);
      im.push_back(c);
      pops.push_back(rho(i, i).real());
    }
    rows.push_back({{"t", static_cast<double>(m) * schedule.step_size()},
                    {"u", detail::control_at(schedule, m)},
                    {"populations", pops},
                    {"coherence_sq", coherence_squared(rho, spec)},
                    {"rho_re", re},
                    {"rho_im", im}});
  }
  return rows;
}

inline std::string convergence_csv(const SolveReport& report) {
  std::string out = "iteration,fidelity,max_u_change,omega_change,phi_change,omega,phi\n";
  for (const auto& r : report.history) {
    out += detail::join_row({static_cast<double>(r.iteration), r.fidelity, r.max_u_change, r.omega_change,
                             r.phi_change, r.omega, r.phi});
  }
  return out;
}

/// One row per (iteration, grid point) for every iteration that updated the controls.
inline std::string multipliers_csv(const SolveReport& report, std::size_t n_steps) {
  std::string out = "iteration,m,t,mu1,mu2,mu_bar,activity\n";
  const double h = 1.0 / static_cast<double>(n_steps);
  for (const auto& r : report.history) {
    if (!r.multipliers) continue;
    const auto& tr = *r.multipliers;
    for (std::size_t m = 0; m < tr.mu1.size(); ++m) {
      out += std::to_string(r.iteration) + ',' + std::to_string(m) + ',' + format_number(static_cast<double>(m) * h) +
             ',' + format_number(tr.mu1[m]) + ',' + format_number(tr.mu2[m]) + ',' + format_number(tr.mu_bar(m)) +
             ',' + to_string(tr.activity[m]) + '\n';
    }
  }
  return out;
}

inline std::string costates_csv(const CostateTrajectory& costates, double step) {
  const Eigen::Index n = costates.costates.front().dim();
  std::string out = "t";
  for (const auto& c : detail::entry_columns("pi_", n)) out += "," + c;
  out += '\n';
  for (std::size_t m = 0; m < costates.costates.size(); ++m) {
    std::vector<double> row{static_cast<double>(m) * step};
    detail::append_entries(row, costates.costates[m].matrix());
    out += detail::join_row(row);
  }
  return out;
}

inline nlohmann::ordered_json diagnostics_json(const StateDiagnostics& d) {
  return {{"trace_error", d.trace_error},
          {"hermiticity_error", d.hermiticity_error},
          {"min_eigenvalue", d.min_eigenvalue}};
}

inline nlohmann::ordered_json constraints_json(const ConstraintSummary& s) {
  return {{"max_upper_violation", s.max_upper_violation},
          {"max_lower_violation", s.max_lower_violation},
          {"violating_points", s.violating_points},
          {"upper_active_points", s.upper_active_points},
          {"lower_active_points", s.lower_active_points}};
}

/// Imaginary parts of the Hamiltonian trace above this are flagged.
inline constexpr double kHamiltonianImagWarning = 1e-8;

inline nlohmann::ordered_json summary_json(const SolveReport& report, const RunConfig& config) {
  nlohmann::ordered_json j;
  j["mode"] = "solve";
  j["initial_fidelity"] = report.initial_fidelity;
  j["final_fidelity"] = report.final_fidelity;
  j["iterations"] = report.iterations;
  j["stop_reason"] = to_string(report.stop_reason);
  j["fidelity_history"] = report.fidelity_history;
  j["final_schedule"] = {
      {"omega", report.final_schedule.omega}, {"phi", report.final_schedule.phi}, {"u", report.final_schedule.u}};
  j["constraints"] = constraints_json(report.constraints);
  j["flags"] = {{"fallback_gradient_used", report.fallback_gradient_used},
                {"adjoint_discrepancy", report.adjoint_discrepancy},
                {"max_hamiltonian_imag", report.max_hamiltonian_imag},
                {"hamiltonian_imag_warning", report.max_hamiltonian_imag > kHamiltonianImagWarning}};
  j["worst_state"] = diagnostics_json(report.worst_state);
  j["config"] = config.to_json();
  return j;
}

// Full double precision in the structured summary.
inline std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + '\n'; }

inline void add_trajectory(ArtifactSet& set, const RunConfig& config, const Trajectory& traj,
                           const ControlSchedule& schedule, const CoherenceSpec& spec) {
  if (config.trajectory_format != TrajectoryFormat::json) {
    set.add("trajectory.csv", trajectory_csv(traj, schedule, spec));
  }
  if (config.trajectory_format != TrajectoryFormat::csv) {
    set.add("trajectory.json", dump(trajectory_json(traj, schedule, spec)));
  }
}

inline ArtifactSet solve_artifacts(const RunConfig& config, std::ostream& log) {
  const Problem problem = config.problem();
  const SolverConfig sc = config.solver_config();
  const SolveReport report = solve(problem, sc);
  log << "solve: " << report.iterations << " iterations, " << to_string(report.stop_reason) << ", fidelity "
      << format_number(report.initial_fidelity) << " -> " << format_number(report.final_fidelity) << '\n';
  if (report.max_hamiltonian_imag > kHamiltonianImagWarning) {
    log << "warning: Hamiltonian trace has imaginary part " << format_number(report.max_hamiltonian_imag) << '\n';
  }

  ArtifactSet set;
  add_trajectory(set, config, report.final_trajectory, report.final_schedule, problem.spec);
  set.add("convergence.csv", convergence_csv(report));
  set.add("multipliers.csv", multipliers_csv(report, config.steps));
  if (config.write_costates) {
    const auto& traj = report.final_trajectory;
    const auto terminal = terminal_costate(traj.final_state(), problem.target, sc.terminal_gradient);
    const auto track = build_multiplier_track(traj, problem.spec, sc.multipliers);
    const auto costates = propagate_backward(CostateMatrix(terminal.pi), traj, track, report.final_schedule,
                                             problem.model, problem.channels, problem.spec, sc.adjoint);
    set.add("costates.csv", costates_csv(costates, report.final_schedule.step_size()));
  }
  set.add("summary.json", dump(summary_json(report, config)));
  return set;
}

inline ArtifactSet propagate_artifacts(const RunConfig& config, std::ostream& log) {
  const Problem problem = config.problem();
  const SolverConfig sc = config.solver_config();
  const ControlSchedule schedule = initial_schedule(sc);
  const Trajectory traj =
      propagate_forward(problem.rho0, schedule, problem.model, problem.channels, sc.propagator, sc.state_tolerances);
  const double f = fidelity(traj.final_state(), problem.target.sigma);
  log << "propagate: " << schedule.steps() << " steps, fidelity " << format_number(f) << '\n';

  ArtifactSet set;
  add_trajectory(set, config, traj, schedule, problem.spec);
  nlohmann::ordered_json j;
  j["mode"] = "propagate";
  j["final_fidelity"] = f;
  j["steps"] = schedule.steps();
  j["constraints"] = constraints_json(summarize_constraints(traj, problem.spec, sc.multipliers.eps_act));
  j["worst_state"] = diagnostics_json(traj.worst);
  j["config"] = config.to_json();
  set.add("summary.json", dump(j));
  return set;
}

struct CheckResult {
  std::string name;
  double value;
  double threshold;
  bool passed;
};

/// Invariant suite on the configured problem and its initial schedule.
inline std::vector<CheckResult> run_checks(const RunConfig& config) {
  const Problem problem = config.problem();
  const SolverConfig sc = config.solver_config();
  const ControlSchedule schedule = initial_schedule(sc);
  const Trajectory traj =
      propagate_forward(problem.rho0, schedule, problem.model, problem.channels, sc.propagator, sc.state_tolerances);
  std::vector<CheckResult> out;

  double liou = 0.0;
  double adj = 0.0;
  for (std::size_t m = 0; m < schedule.steps(); ++m) {
    const ComplexMatrix h = schedule.hamiltonian(problem.model, m);
    const ComplexMatrix& rho = traj.states[m].matrix();
    liou = std::max(liou, (liouvillian(h, problem.channels) * vectorize(rho) -
                           vectorize(master_rhs(rho, h, problem.channels)))
                              .cwiseAbs()
                              .maxCoeff());
    const ComplexMatrix g = adjoint_generator(h, problem.channels, AdjointMode::derived);
    adj = std::max(adj, (g * vectorize(rho) - vectorize(g_operator(rho, h, problem.channels))).cwiseAbs().maxCoeff());
  }
  out.push_back({"liouvillian_identity", liou, 1e-12, liou <= 1e-12});
  out.push_back({"adjoint_identity", adj, 1e-12, adj <= 1e-12});

  const auto& w = traj.worst;
  out.push_back({"trace_error", w.trace_error, 1e-10, w.trace_error <= 1e-10});
  out.push_back({"hermiticity_error", w.hermiticity_error, 1e-10, w.hermiticity_error <= 1e-10});
  out.push_back({"min_eigenvalue", w.min_eigenvalue, -1e-9, w.min_eigenvalue >= -1e-9});

  // Terminal gradient against central differences.
  const auto terminal = terminal_costate(traj.final_state(), problem.target, sc.terminal_gradient);
  const ComplexMatrix fd = fidelity_gradient_fd(traj.final_state().matrix(), problem.target.sigma.matrix());
  const double tg = (terminal.pi - fd).norm() / std::max(fd.norm(), 1e-8);
  out.push_back({"terminal_gradient_rel_error", tg, 1e-5, tg <= 1e-5});

  // Adjoint control gradient with zero multipliers against re-propagation.
  const auto track = MultiplierTrack::zeros(schedule.steps());
  const auto costates = propagate_backward(CostateMatrix(terminal.pi), traj, track, schedule, problem.model,
                                           problem.channels, problem.spec, sc.adjoint);
  const auto grad = adjoint_control_gradient(problem, schedule, traj, costates, track, sc.adjoint);
  const double step = 1e-5;
  double worst = 0.0;
  for (std::size_t m : {std::size_t{0}, schedule.steps() / 2, schedule.steps() - 1}) {
    ControlSchedule plus = schedule;
    ControlSchedule minus = schedule;
    plus.u[m] += step;
    minus.u[m] -= step;
    auto f = [&](const ControlSchedule& s) {
      return uhlmann_fidelity(
          propagate_forward(problem.rho0, s, problem.model, problem.channels, sc.propagator).final_state().matrix(),
          problem.target.sigma.matrix());
    };
    const double fd_m = (f(plus) - f(minus)) / (2.0 * step);
    const double excess = std::abs(grad[m] - fd_m) - (1e-3 * std::abs(fd_m) + 1e-8);
    worst = std::max(worst, excess);
  }
  out.push_back({"adjoint_gradient_excess", worst, 0.0, worst <= 0.0});
  return out;
}

inline ArtifactSet check_artifacts(const RunConfig& config, std::ostream& log, bool& all_passed) {
  const auto results = run_checks(config);
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  all_passed = true;
  for (const auto& r : results) {
    log << (r.passed ? "PASS " : "FAIL ") << r.name << " = " << format_number(r.value) << " (threshold "
        << format_number(r.threshold) << ")\n";
    all_passed = all_passed && r.passed;
    arr.push_back({{"name", r.name}, {"value", r.value}, {"threshold", r.threshold}, {"passed", r.passed}});
  }
  nlohmann::ordered_json j;
  j["mode"] = "check";
  j["passed"] = all_passed;
  j["checks"] = arr;
  j["config"] = config.to_json();
  ArtifactSet set;
  set.add("check.json", dump(j));
  return set;
}

/// Runs one mode and commits its artifacts; returns the process exit code.
inline int run(const RunConfig& config, RunMode mode, std::ostream& log, std::ostream& err = std::cerr) {
  try {
    ArtifactSet set;
    bool passed = true;
    switch (mode) {
      case RunMode::solve:
        set = solve_artifacts(config, log);
        break;
      case RunMode::propagate:
        set = propagate_artifacts(config, log);
        break;
      case RunMode::check:
        set = check_artifacts(config, log, passed);
        break;
    }
    set.commit(config.out_dir);
    return passed ? kExitOk : kExitSolver;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const PropagationError& e) {
    err << "solver error at step " << e.step() << ": " << e.what() << '\n';
    return kExitSolver;
  } catch (const std::exception& e) {
    err << "solver error: " << e.what() << '\n';
    return kExitSolver;
  }
}

}  // namespace qpmp
