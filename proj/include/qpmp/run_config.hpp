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

// Run configuration: a JSON document with a schema_version field. Every key is
// optional; omitted keys take the defaults below. Unknown keys are rejected.
//
//   {
//     "schema_version": 1,
//     "model":  { "energy_e", "energy_a", "energy_b", "gamma_a", "gamma_b",
//                 "beta", "c0", "alpha", "lower_bound": "strict|grace|disabled" },
//     "solver": { "steps", "max_iterations", "eps_u", "eps_omega", "eps_phi", "eps_act",
//                 "multiplier_increment": "frobenius|fixed|rate", "multiplier_fixed_step",
//                 "u_min", "u_max", "u_points", "omega_min", "omega_max", "omega_points",
//                 "phi_points", "refine", "tie_tolerance", "prefer_incumbent",
//                 "propagator": "product|exponent_sum", "adjoint": "derived|printed",
//                 "terminal_gradient": "analytic|cayley_hamilton|finite_difference",
//                 "relaxation", "initial_u", "initial_omega", "initial_phi" },
//     "output": { "dir", "trajectory_format": "csv|json|both", "costates" },
//     "seed": 0
//   }

#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>

#include "qpmp/errors.hpp"
#include "qpmp/lambda_atom.hpp"
#include "qpmp/solver.hpp"

namespace qpmp {

inline constexpr int kSchemaVersion = 1;

enum class TrajectoryFormat { csv, json, both };

struct RunConfig {
  int schema_version = kSchemaVersion;

  // model
  lambda::LambdaAtomModel atom;
  double beta = std::numbers::pi / 2.0;
  double c0 = 1.0;
  double alpha = 0.5;
  LowerBoundMode lower_bound = LowerBoundMode::grace;

  // solver
  std::size_t steps = 50;
  std::size_t max_iterations = 200;
  double eps_u = 1e-4;
  double eps_omega = 1e-4;
  double eps_phi = 1e-4;
  double eps_act = 1e-6;
  IncrementRule multiplier_increment = IncrementRule::frobenius;
  double multiplier_fixed_step = 1.0;
  double u_min = -1.0;
  double u_max = 1.0;
  std::size_t u_points = 41;
  double omega_min = 0.1;
  double omega_max = 0.5;
  std::size_t omega_points = 21;
  std::size_t phi_points = 16;
  bool refine = false;
  double tie_tolerance = 1e-10;
  bool prefer_incumbent = false;
  PropagatorMode propagator = PropagatorMode::product;
  AdjointMode adjoint = AdjointMode::derived;
  TerminalGradientMode terminal_gradient = TerminalGradientMode::analytic;
  double relaxation = 1.0;
  double initial_u = 0.0;
  double initial_omega = 0.3;
  double initial_phi = 0.0;

  // output
  std::string out_dir = "qpmp_out";
  TrajectoryFormat trajectory_format = TrajectoryFormat::csv;
  bool write_costates = false;

  /// Reserved; the solver is deterministic and never reads it.
  std::uint64_t seed = 0;

  friend bool operator==(const RunConfig& a, const RunConfig& b) { return a.to_json() == b.to_json(); }

  nlohmann::ordered_json to_json() const;
  SolverConfig solver_config() const;
  Problem problem() const;
};

namespace detail {

template <typename E>
using EnumNames = std::map<E, std::string_view>;

inline const EnumNames<LowerBoundMode>& names(LowerBoundMode) {
  static const EnumNames<LowerBoundMode> n{
      {LowerBoundMode::strict, "strict"}, {LowerBoundMode::grace, "grace"}, {LowerBoundMode::disabled, "disabled"}};
  return n;
}
inline const EnumNames<IncrementRule>& names(IncrementRule) {
  static const EnumNames<IncrementRule> n{
      {IncrementRule::frobenius, "frobenius"}, {IncrementRule::fixed, "fixed"}, {IncrementRule::rate, "rate"}};
  return n;
}
inline const EnumNames<PropagatorMode>& names(PropagatorMode) {
  static const EnumNames<PropagatorMode> n{{PropagatorMode::product, "product"},
                                           {PropagatorMode::exponent_sum, "exponent_sum"}};
  return n;
}
inline const EnumNames<AdjointMode>& names(AdjointMode) {
  static const EnumNames<AdjointMode> n{{AdjointMode::derived, "derived"}, {AdjointMode::printed, "printed"}};
  return n;
}
inline const EnumNames<TerminalGradientMode>& names(TerminalGradientMode) {
  static const EnumNames<TerminalGradientMode> n{{TerminalGradientMode::analytic, "analytic"},
                                                 {TerminalGradientMode::cayley_hamilton, "cayley_hamilton"},
                                                 {TerminalGradientMode::finite_difference, "finite_difference"}};
  return n;
}
inline const EnumNames<TrajectoryFormat>& names(TrajectoryFormat) {
  static const EnumNames<TrajectoryFormat> n{
      {TrajectoryFormat::csv, "csv"}, {TrajectoryFormat::json, "json"}, {TrajectoryFormat::both, "both"}};
  return n;
}

template <typename E>
std::string enum_name(E e) {
  return std::string(names(e).at(e));
}

// 1-based line of the first occurrence of "key" in the source text, 0 if unknown.
inline int line_of_key(std::string_view text, std::string_view key) {
  const std::string quoted = "\"" + std::string(key) + "\"";
  const auto pos = text.find(quoted);
  if (pos == std::string_view::npos) return 0;
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

inline int line_of_offset(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

// Reads one section, tracking which keys were consumed so leftovers can be reported.
class SectionReader {
 public:
  SectionReader(const nlohmann::json& obj, std::string prefix, std::string_view text)
      : obj_(obj), prefix_(std::move(prefix)), text_(text) {
    if (!obj_.is_object()) throw ConfigError(prefix_, "expected an object", line_of_key(text_, prefix_));
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.emplace(key);
    const auto it = obj_.find(key);
    if (it == obj_.end()) return;
    const std::string field = prefix_.empty() ? key : prefix_ + "." + key;
    try {
      if constexpr (std::is_enum_v<T>) {
        const auto s = it->template get<std::string>();
        for (const auto& [value, name] : names(T{})) {
          if (name == s) {
            out = value;
            return;
          }
        }
        throw ConfigError(field, "unknown value \"" + s + "\"", line_of_key(text_, key));
      } else if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!it->is_number_integer() || it->template get<long long>() < 0) {
          throw ConfigError(field, "expected a non-negative integer", line_of_key(text_, key));
        }
        out = it->template get<T>();
      } else if constexpr (std::is_same_v<T, double>) {
        if (!it->is_number()) throw ConfigError(field, "expected a number", line_of_key(text_, key));
        out = it->template get<double>();
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError(field, "expected true or false", line_of_key(text_, key));
        out = it->template get<bool>();
      } else {
        out = it->template get<T>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(field, std::string("wrong type: ") + e.what(), line_of_key(text_, key));
    }
  }

  void reject_unknown() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) {
        throw ConfigError(prefix_.empty() ? key : prefix_ + "." + key, "unknown key", line_of_key(text_, key));
      }
    }
  }

 private:
  const nlohmann::json& obj_;
  std::string prefix_;
  std::string_view text_;
  std::set<std::string> seen_;
};

inline void range_check(bool ok, const char* field, const std::string& what, std::string_view text) {
  if (!ok) {
    const std::string_view f(field);
    const auto dot = f.rfind('.');
    throw ConfigError(field, what, line_of_key(text, dot == std::string_view::npos ? f : f.substr(dot + 1)));
  }
}

}  // namespace detail

/// Range checks; throws ConfigError naming the field.
inline void validate(const RunConfig& c, std::string_view text = {}) {
  using detail::range_check;
  range_check(c.schema_version == kSchemaVersion, "schema_version",
              "unsupported schema version " + std::to_string(c.schema_version), text);
  range_check(c.atom.gamma_a >= 0.0, "model.gamma_a", "rate must be non-negative", text);
  range_check(c.atom.gamma_b >= 0.0, "model.gamma_b", "rate must be non-negative", text);
  range_check(std::isfinite(c.beta), "model.beta", "must be finite", text);
  range_check(c.c0 > 0.0, "model.c0", "must be positive", text);
  range_check(c.alpha > 0.0 && c.alpha < 1.0, "model.alpha", "must lie in (0, 1)", text);
  range_check(c.steps >= 2, "solver.steps", "must be at least 2", text);
  range_check(c.eps_u > 0.0, "solver.eps_u", "must be positive", text);
  range_check(c.eps_omega > 0.0, "solver.eps_omega", "must be positive", text);
  range_check(c.eps_phi > 0.0, "solver.eps_phi", "must be positive", text);
  range_check(c.eps_act > 0.0, "solver.eps_act", "must be positive", text);
  range_check(c.multiplier_fixed_step >= 0.0, "solver.multiplier_fixed_step", "must be non-negative", text);
  range_check(c.u_min <= c.u_max, "solver.u_min", "must not exceed u_max", text);
  range_check(c.u_points >= 1, "solver.u_points", "grid must be non-empty", text);
  range_check(c.omega_min <= c.omega_max, "solver.omega_min", "must not exceed omega_max", text);
  range_check(c.omega_points >= 1, "solver.omega_points", "grid must be non-empty", text);
  range_check(c.phi_points >= 1, "solver.phi_points", "grid must be non-empty", text);
  range_check(c.tie_tolerance >= 0.0, "solver.tie_tolerance", "must be non-negative", text);
  range_check(c.relaxation > 0.0 && c.relaxation <= 1.0, "solver.relaxation", "must lie in (0, 1]", text);
  range_check(c.initial_u >= c.u_min && c.initial_u <= c.u_max, "solver.initial_u", "must lie in [u_min, u_max]",
              text);
  range_check(!c.out_dir.empty(), "output.dir", "must not be empty", text);
}

/// Parses configuration text; an empty or whitespace-only document yields the defaults.
inline RunConfig parse_config_text(std::string_view text) {
  RunConfig c;
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) return c;

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("", std::string("malformed JSON: ") + e.what(), detail::line_of_offset(text, e.byte));
  }

  detail::SectionReader top(doc, "", text);
  top.read("schema_version", c.schema_version);
  top.read("seed", c.seed);
  if (const auto it = doc.find("model"); it != doc.end()) {
    detail::SectionReader r(*it, "model", text);
    r.read("energy_e", c.atom.energy_e);
    r.read("energy_a", c.atom.energy_a);
    r.read("energy_b", c.atom.energy_b);
    r.read("gamma_a", c.atom.gamma_a);
    r.read("gamma_b", c.atom.gamma_b);
    r.read("beta", c.beta);
    r.read("c0", c.c0);
    r.read("alpha", c.alpha);
    r.read("lower_bound", c.lower_bound);
    r.reject_unknown();
  }
  if (const auto it = doc.find("solver"); it != doc.end()) {
    detail::SectionReader r(*it, "solver", text);
    r.read("steps", c.steps);
    r.read("max_iterations", c.max_iterations);
    r.read("eps_u", c.eps_u);
    r.read("eps_omega", c.eps_omega);
    r.read("eps_phi", c.eps_phi);
    r.read("eps_act", c.eps_act);
    r.read("multiplier_increment", c.multiplier_increment);
    r.read("multiplier_fixed_step", c.multiplier_fixed_step);
    r.read("u_min", c.u_min);
    r.read("u_max", c.u_max);
    r.read("u_points", c.u_points);
    r.read("omega_min", c.omega_min);
    r.read("omega_max", c.omega_max);
    r.read("omega_points", c.omega_points);
    r.read("phi_points", c.phi_points);
    r.read("refine", c.refine);
    r.read("tie_tolerance", c.tie_tolerance);
    r.read("prefer_incumbent", c.prefer_incumbent);
    r.read("propagator", c.propagator);
    r.read("adjoint", c.adjoint);
    r.read("terminal_gradient", c.terminal_gradient);
    r.read("relaxation", c.relaxation);
    r.read("initial_u", c.initial_u);
    r.read("initial_omega", c.initial_omega);
    r.read("initial_phi", c.initial_phi);
    r.reject_unknown();
  }
  if (const auto it = doc.find("output"); it != doc.end()) {
    detail::SectionReader r(*it, "output", text);
    r.read("dir", c.out_dir);
    r.read("trajectory_format", c.trajectory_format);
    r.read("costates", c.write_costates);
    r.reject_unknown();
  }
  for (const auto& [key, value] : doc.items()) {
    if (key != "model" && key != "solver" && key != "output" && key != "schema_version" && key != "seed") {
      throw ConfigError(key, "unknown key", detail::line_of_key(text, key));
    }
  }
  validate(c, text);
  return c;
}

inline RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

inline nlohmann::ordered_json RunConfig::to_json() const {
  using detail::enum_name;
  nlohmann::ordered_json j;
  j["schema_version"] = schema_version;
  j["model"] = {{"energy_e", atom.energy_e},     {"energy_a", atom.energy_a}, {"energy_b", atom.energy_b},
                {"gamma_a", atom.gamma_a},       {"gamma_b", atom.gamma_b},   {"beta", beta},
                {"c0", c0},                      {"alpha", alpha},            {"lower_bound", enum_name(lower_bound)}};
  j["solver"] = {{"steps", steps},
                 {"max_iterations", max_iterations},
                 {"eps_u", eps_u},
                 {"eps_omega", eps_omega},
                 {"eps_phi", eps_phi},
                 {"eps_act", eps_act},
                 {"multiplier_increment", enum_name(multiplier_increment)},
                 {"multiplier_fixed_step", multiplier_fixed_step},
                 {"u_min", u_min},
                 {"u_max", u_max},
                 {"u_points", u_points},
                 {"omega_min", omega_min},
                 {"omega_max", omega_max},
                 {"omega_points", omega_points},
                 {"phi_points", phi_points},
                 {"refine", refine},
                 {"tie_tolerance", tie_tolerance},
                 {"prefer_incumbent", prefer_incumbent},
                 {"propagator", enum_name(propagator)},
                 {"adjoint", enum_name(adjoint)},
                 {"terminal_gradient", enum_name(terminal_gradient)},
                 {"relaxation", relaxation},
                 {"initial_u", initial_u},
                 {"initial_omega", initial_omega},
                 {"initial_phi", initial_phi}};
  j["output"] = {{"dir", out_dir}, {"trajectory_format", enum_name(trajectory_format)}, {"costates", write_costates}};
  j["seed"] = seed;
  return j;
}

inline SolverConfig RunConfig::solver_config() const {
  SolverConfig s;
  s.steps = steps;
  s.max_iterations = max_iterations;
  s.eps_u = eps_u;
  s.eps_omega = eps_omega;
  s.eps_phi = eps_phi;
  s.multipliers.eps_act = eps_act;
  s.multipliers.rule = multiplier_increment;
  s.multipliers.fixed_step = multiplier_fixed_step;
  s.grids = ControlGrids(ControlGrids::linspace(u_min, u_max, u_points),
                         ControlGrids::linspace(omega_min, omega_max, omega_points), ControlGrids::phases(phi_points));
  s.maximizer.refine = refine;
  s.maximizer.tie_tolerance = tie_tolerance;
  s.maximizer.prefer_incumbent = prefer_incumbent;
  s.propagator = propagator;
  s.adjoint = adjoint;
  s.terminal_gradient = terminal_gradient;
  s.relaxation = relaxation;
  s.initial = {initial_u, initial_omega, initial_phi};
  return s;
}

inline Problem RunConfig::problem() const { return lambda::default_problem(beta, c0, alpha, lower_bound, atom); }

}  // namespace qpmp
