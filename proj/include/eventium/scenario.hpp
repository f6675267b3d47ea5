// INI scenario files.
//
//   [system]      dim, hamiltonian (rows split by '|'), initial
//   [measurement] outcomes, vectors (one per outcome, split by '|'),
//                 rate_model = constant | table | microscopic,
//                 rate, table, phases, coupling, channel_scale,
//                 ready_energy, interaction_time
//   [grid]        t0, dt, steps
//   [events]      max_events, dead_time_steps
//   [oracle]      enabled, tolerance, clock_dims
//   [output]      format = csv | structured, path, horizon
//
// Complex entries are "re,im" or a bare real; entries are separated by spaces.
#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "eventium/chains.hpp"
#include "eventium/detection.hpp"
#include "eventium/errors.hpp"
#include "eventium/hilbert.hpp"
#include "eventium/oracle.hpp"

namespace eventium {

class ConfigError : public ValidationError {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : ValidationError(field + ": " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct ScenarioConfig {
  ChainModel chain;
  ClockGrid grid;
  std::string rate_model = "constant";
  // Set for the microscopic rate model; also used by oracle checks.
  std::optional<OracleSpec> oracle_spec;
  bool oracle_enabled = false;
  double oracle_tolerance = 1e-8;
  std::vector<std::size_t> clock_dims;
  std::string output_format = "csv";
  std::string output_path;
  std::size_t horizon = 0;
  std::vector<std::string> warnings;

  const MeasurementModel& model() const noexcept { return chain.base; }
};

namespace config_detail {

using boost::property_tree::ptree;

inline std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

inline double number(const std::string& s, const std::string& field) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0' || !std::isfinite(v)) throw ConfigError(field, "not a finite number: '" + s + "'");
  return v;
}

inline std::size_t count(const std::string& s, const std::string& field) {
  char* end = nullptr;
  unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0' || s.front() == '-') throw ConfigError(field, "not a non-negative integer: '" + s + "'");
  return static_cast<std::size_t>(v);
}

inline Complex complex_entry(const std::string& s, const std::string& field) {
  auto comma = s.find(',');
  if (comma == std::string::npos) return {number(s, field), 0.0};
  return {number(s.substr(0, comma), field), number(s.substr(comma + 1), field)};
}

inline Vector complex_vector(const std::string& s, const std::string& field) {
  auto w = words(s);
  Vector v(static_cast<Eigen::Index>(w.size()));
  for (std::size_t i = 0; i < w.size(); ++i) v(static_cast<Eigen::Index>(i)) = complex_entry(w[i], field);
  return v;
}

inline std::vector<Vector> vector_list(const std::string& s, const std::string& field) {
  std::vector<Vector> out;
  std::string part;
  std::istringstream in(s);
  while (std::getline(in, part, '|')) out.push_back(complex_vector(part, field));
  return out;
}

inline std::vector<double> real_list(const std::string& s, const std::string& field) {
  std::vector<double> out;
  for (const auto& w : words(s)) out.push_back(number(w, field));
  return out;
}

inline std::optional<std::string> get(const ptree& pt, const std::string& section, const std::string& key) {
  auto sec = pt.get_child_optional(ptree::path_type(section, '/'));
  if (!sec) return std::nullopt;
  auto v = sec->get_optional<std::string>(ptree::path_type(key, '/'));
  if (!v) return std::nullopt;
  return *v;
}

inline std::string require(const ptree& pt, const std::string& section, const std::string& key) {
  auto v = get(pt, section, key);
  if (!v) throw ConfigError(section + "." + key, "missing");
  return *v;
}

inline bool flag(const std::string& s, const std::string& field) {
  if (s == "true" || s == "yes" || s == "1" || s == "on") return true;
  if (s == "false" || s == "no" || s == "0" || s == "off") return false;
  throw ConfigError(field, "not a boolean: '" + s + "'");
}

}  // namespace config_detail

inline ScenarioConfig parse_scenario(std::istream& in) {
  using namespace config_detail;
  ptree pt;
  try {
    boost::property_tree::ini_parser::read_ini(in, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("file", fmt::format("line {}: {}", e.line(), e.message()));
  }
  static const std::vector<std::string> known{"system", "measurement", "grid", "events", "oracle", "output"};
  for (const auto& [name, child] : pt)
    if (std::find(known.begin(), known.end(), name) == known.end()) throw ConfigError(name, "unknown section");

  ScenarioConfig c;
  auto& m = c.chain.base;

  // grid
  c.grid.t0 = get(pt, "grid", "t0") ? number(*get(pt, "grid", "t0"), "grid.t0") : 0.0;
  c.grid.dt = number(require(pt, "grid", "dt"), "grid.dt");
  c.grid.steps = count(require(pt, "grid", "steps"), "grid.steps");
  try {
    validate_grid(c.grid);
  } catch (const ValidationError& e) {
    throw ConfigError("grid", e.what());
  }

  // system
  const std::size_t dim = count(require(pt, "system", "dim"), "system.dim");
  if (dim == 0) throw ConfigError("system.dim", "must be positive");
  if (auto h = get(pt, "system", "hamiltonian")) {
    auto rows = vector_list(*h, "system.hamiltonian");
    if (rows.size() != dim) throw ConfigError("system.hamiltonian", "expected one row per dimension");
    Matrix mat(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < dim; ++i) {
      if (static_cast<std::size_t>(rows[i].size()) != dim) throw ConfigError("system.hamiltonian", fmt::format("row {} has the wrong length", i + 1));
      mat.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    }
    m.free_h = OperatorMatrix(mat);
    if (!m.free_h.is_hermitian()) throw ConfigError("system.hamiltonian", "not hermitian");
  } else {
    m.free_h = OperatorMatrix::zero(dim, dim);
  }
  Vector psi0 = complex_vector(require(pt, "system", "initial"), "system.initial");
  if (static_cast<std::size_t>(psi0.size()) != dim) throw ConfigError("system.initial", "wrong length");
  double n0 = psi0.norm();
  if (n0 == 0.0) throw ConfigError("system.initial", "zero vector");
  if (std::abs(n0 - 1.0) > 1e-12) {
    c.warnings.push_back(fmt::format("system.initial: norm {:.17g} renormalized", n0));
    psi0 /= n0;
  }
  m.initial = StateVector(psi0);

  // measurement
  auto labels = words(require(pt, "measurement", "outcomes"));
  for (const auto& l : labels)
    if (l.find_first_of(",|\t") != std::string::npos) throw ConfigError("measurement.outcomes", "labels may not contain ',', '|' or tabs");
  auto vecs = vector_list(require(pt, "measurement", "vectors"), "measurement.vectors");
  if (vecs.size() != labels.size()) throw ConfigError("measurement.vectors", "expected one vector per outcome");
  std::vector<StateVector> states;
  for (auto& v : vecs) {
    if (static_cast<std::size_t>(v.size()) != dim) throw ConfigError("measurement.vectors", "wrong length");
    if (v.norm() == 0.0) throw ConfigError("measurement.vectors", "zero vector");
    states.emplace_back(v / v.norm());
  }
  try {
    m.outcomes = ProjectiveMeasurement::from_vectors(labels, states, 1e-9);
  } catch (const ValidationError& e) {
    throw ConfigError("measurement.vectors", e.what());
  }
  if (auto t = get(pt, "measurement", "interaction_time")) m.interaction_time = number(*t, "measurement.interaction_time");

  c.rate_model = get(pt, "measurement", "rate_model").value_or("constant");
  if (c.rate_model == "constant") {
    m.step_probs = constant_rate_schedule(number(require(pt, "measurement", "rate"), "measurement.rate"), c.grid);
  } else if (c.rate_model == "table") {
    m.step_probs = real_list(require(pt, "measurement", "table"), "measurement.table");
    if (m.step_probs.size() < c.grid.steps) throw ConfigError("measurement.table", "shorter than the grid");
  } else if (c.rate_model != "microscopic") {
    throw ConfigError("measurement.rate_model", "expected constant, table or microscopic");
  }
  if (auto p = get(pt, "measurement", "phases")) {
    m.step_phases = real_list(*p, "measurement.phases");
    if (m.step_phases.size() == 1) m.step_phases.assign(c.grid.steps, m.step_phases.front());
    if (m.step_phases.size() < c.grid.steps) throw ConfigError("measurement.phases", "shorter than the grid");
  }

  // events
  if (auto e = get(pt, "events", "max_events")) c.chain.max_events = count(*e, "events.max_events");
  if (c.chain.max_events == 0) throw ConfigError("events.max_events", "must be at least 1");
  if (auto d = get(pt, "events", "dead_time_steps")) c.chain.dead_time_steps = count(*d, "events.dead_time_steps");

  if (c.rate_model == "microscopic") {
    OracleSpec s;
    s.system_h = m.free_h;
    s.outcomes = m.outcomes;
    s.initial = m.initial;
    s.grid = c.grid;
    auto g = real_list(require(pt, "measurement", "coupling"), "measurement.coupling");
    if (g.size() == 1) g.assign(c.grid.steps, g.front());
    if (g.size() < c.grid.steps) throw ConfigError("measurement.coupling", "shorter than the grid");
    s.couplings = g;
    if (auto cs = get(pt, "measurement", "channel_scale")) s.channel_scale = real_list(*cs, "measurement.channel_scale");
    if (auto re = get(pt, "measurement", "ready_energy")) s.ready_energy = number(*re, "measurement.ready_energy");
    if (get(pt, "measurement", "phases")) throw ConfigError("measurement.phases", "use ready_energy with the microscopic model");
    s.dead_time_steps = c.chain.dead_time_steps;
    try {
      validate_oracle_spec(s);
      bool uniform = true;
      for (double v : s.channel_scale) uniform = uniform && v == 1.0;
      if (uniform) {
        auto cal = calibrate_rates(simulate_and_extract(build_total_hamiltonian(s)).branches);
        for (auto& w : cal.warnings) c.warnings.push_back(std::move(w));
        m.step_probs = cal.step_probs;
        m.step_phases = cal.step_phases;
        m.step_probs.resize(c.grid.steps, 1.0);
        m.step_phases.resize(c.grid.steps, 0.0);
      } else {
        MeasurementModel eff = effective_step_model(s);
        m.step_probs = eff.step_probs;
        m.step_phases = eff.step_phases;
        m.u_nodetect = eff.u_nodetect;
        m.u_detect = eff.u_detect;
      }
    } catch (const BudgetError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("measurement", e.what());
    }
    c.oracle_spec = s;
  }

  // oracle
  if (auto e = get(pt, "oracle", "enabled")) c.oracle_enabled = flag(*e, "oracle.enabled");
  if (auto t = get(pt, "oracle", "tolerance")) c.oracle_tolerance = number(*t, "oracle.tolerance");
  if (!(c.oracle_tolerance > 0.0)) throw ConfigError("oracle.tolerance", "must be positive");
  if (auto d = get(pt, "oracle", "clock_dims"))
    for (const auto& w : words(*d)) c.clock_dims.push_back(count(w, "oracle.clock_dims"));

  // output
  c.output_format = get(pt, "output", "format").value_or("csv");
  if (c.output_format != "csv" && c.output_format != "structured") throw ConfigError("output.format", "expected csv or structured");
  c.output_path = get(pt, "output", "path").value_or("");
  c.horizon = c.grid.steps;
  if (auto h = get(pt, "output", "horizon")) c.horizon = count(*h, "output.horizon");

  try {
    auto w = validate_chain_model(c.chain, c.grid);
    c.warnings.insert(c.warnings.end(), w.begin(), w.end());
  } catch (const ConfigError&) {
    throw;
  } catch (const ValidationError& e) {
    throw ConfigError("measurement", e.what());
  }
  return c;
}

inline ScenarioConfig parse_scenario_text(const std::string& text) {
  std::istringstream in(text);
  return parse_scenario(in);
}

inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("file", "cannot open '" + path + "'");
  return parse_scenario(in);
}

// The oracle realization of a scenario: the configured microscopic spec, or a
// ladder reproducing the configured schedule.
inline OracleSpec oracle_spec_for(const ScenarioConfig& c, std::size_t detectors = 1) {
  OracleSpec s = c.oracle_spec ? *c.oracle_spec : ladder_for_schedule(c.model(), c.grid);
  s.detectors = detectors;
  s.dead_time_steps = c.chain.dead_time_steps;
  return s;
}

}  // namespace eventium
