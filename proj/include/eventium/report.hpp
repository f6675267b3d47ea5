// Run reports for the command-line driver: running a scenario, CSV and JSON
// export, and the JSON read-back used for round trips.
#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "eventium/chains.hpp"
#include "eventium/detection.hpp"
#include "eventium/environment.hpp"
#include "eventium/global_state.hpp"
#include "eventium/oracle.hpp"
#include "eventium/scenario.hpp"

namespace eventium {

struct JointRow {
  std::size_t t_index = 0;
  double t = 0.0;
  std::string outcome;
  double probability = 0.0;
  Complex amplitude;
  bool operator==(const JointRow&) const = default;
};

struct PointerRow {
  std::string outcome;
  std::size_t t_index = 0;
  std::string arrangement;
  Complex coefficient;
  bool operator==(const PointerRow&) const = default;
};

struct RunReport {
  std::string command;
  ClockGrid grid;
  std::vector<std::string> outcomes;
  std::vector<JointRow> joint;
  std::vector<double> marginal;
  double no_event_weight = 0.0;
  double gamma_tail = 0.0;
  // sum of the joint table plus the no-event weight; 1 up to rounding
  double self_check = 0.0;
  bool complete = false;
  // chain
  std::size_t max_events = 0;
  std::size_t history_count = 0;
  std::vector<double> level_norms;
  double event_sector_weight = 0.0;
  double no_event_sector_weight = 0.0;
  // environment
  std::vector<PointerRow> pointer_terms;
  std::vector<double> pointer_weights;
  // oracle
  std::optional<double> oracle_deviation;
  double oracle_tolerance = 0.0;
  // constraint residual sweep: (clock dimension, residual)
  std::vector<std::pair<std::size_t, double>> residuals;
  std::vector<std::string> warnings;

  bool operator==(const RunReport&) const = default;
};

struct RunResult {
  RunReport report;
  std::string payload;  // the file body for --out
  bool oracle_mismatch = false;
};

inline double joint_sum(const RunReport& r) {
  double s = 0.0;
  for (const auto& row : r.joint) s += row.probability;
  return s;
}

// Columns t_index,t,outcome,probability,re_amplitude,im_amplitude; LF line
// ends; 17 significant digits; a closing comment with the probability sum.
inline std::string export_csv(const RunReport& r) {
  std::string out = "t_index,t,outcome,probability,re_amplitude,im_amplitude\n";
  for (const auto& row : r.joint)
    out += fmt::format("{},{:.17g},{},{:.17g},{:.17g},{:.17g}\n", row.t_index, row.t, row.outcome, row.probability,
                       row.amplitude.real(), row.amplitude.imag());
  out += fmt::format("# sum_probability={:.17g}\n", joint_sum(r));
  return out;
}

inline std::string export_pointer_csv(const RunReport& r) {
  std::string out = "outcome,t_index,arrangement,re_coefficient,im_coefficient\n";
  for (const auto& p : r.pointer_terms)
    out += fmt::format("{},{},\"{}\",{:.17g},{:.17g}\n", p.outcome, p.t_index, p.arrangement, p.coefficient.real(), p.coefficient.imag());
  for (std::size_t a = 0; a < r.pointer_weights.size(); ++a)
    out += fmt::format("# weight {}={:.17g}\n", r.outcomes[a], r.pointer_weights[a]);
  return out;
}

inline std::string export_residual_csv(const RunReport& r) {
  std::string out = "clock_dim,residual\n";
  for (const auto& [d, v] : r.residuals) out += fmt::format("{},{:.17g}\n", d, v);
  return out;
}

inline nlohmann::json complex_json(Complex c) { return nlohmann::json::array({c.real(), c.imag()}); }
inline Complex complex_from_json(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

inline nlohmann::json to_json(const RunReport& r) {
  using nlohmann::json;
  json j;
  j["command"] = r.command;
  j["grid"] = {{"t0", r.grid.t0}, {"dt", r.grid.dt}, {"steps", r.grid.steps}};
  j["outcomes"] = r.outcomes;
  j["joint"] = json::array();
  for (const auto& row : r.joint)
    j["joint"].push_back({{"t_index", row.t_index}, {"t", row.t}, {"outcome", row.outcome}, {"probability", row.probability},
                          {"amplitude", complex_json(row.amplitude)}});
  j["marginal"] = r.marginal;
  j["no_event_weight"] = r.no_event_weight;
  j["gamma_tail"] = r.gamma_tail;
  j["self_check"] = r.self_check;
  j["complete"] = r.complete;
  j["max_events"] = r.max_events;
  j["history_count"] = r.history_count;
  j["level_norms"] = r.level_norms;
  j["event_sector_weight"] = r.event_sector_weight;
  j["no_event_sector_weight"] = r.no_event_sector_weight;
  j["pointer_terms"] = json::array();
  for (const auto& p : r.pointer_terms)
    j["pointer_terms"].push_back({{"outcome", p.outcome}, {"t_index", p.t_index}, {"arrangement", p.arrangement},
                                  {"coefficient", complex_json(p.coefficient)}});
  j["pointer_weights"] = r.pointer_weights;
  j["oracle_deviation"] = r.oracle_deviation ? json(*r.oracle_deviation) : json(nullptr);
  j["oracle_tolerance"] = r.oracle_tolerance;
  j["residuals"] = json::array();
  for (const auto& [d, v] : r.residuals) j["residuals"].push_back({{"clock_dim", d}, {"residual", v}});
  j["warnings"] = r.warnings;
  return j;
}

inline RunReport report_from_json(const nlohmann::json& j) {
  RunReport r;
  r.command = j.at("command").get<std::string>();
  r.grid = {j.at("grid").at("t0").get<double>(), j.at("grid").at("dt").get<double>(), j.at("grid").at("steps").get<std::size_t>()};
  r.outcomes = j.at("outcomes").get<std::vector<std::string>>();
  for (const auto& row : j.at("joint"))
    r.joint.push_back({row.at("t_index").get<std::size_t>(), row.at("t").get<double>(), row.at("outcome").get<std::string>(),
                       row.at("probability").get<double>(), complex_from_json(row.at("amplitude"))});
  r.marginal = j.at("marginal").get<std::vector<double>>();
  r.no_event_weight = j.at("no_event_weight").get<double>();
  r.gamma_tail = j.at("gamma_tail").get<double>();
  r.self_check = j.at("self_check").get<double>();
  r.complete = j.at("complete").get<bool>();
  r.max_events = j.at("max_events").get<std::size_t>();
  r.history_count = j.at("history_count").get<std::size_t>();
  r.level_norms = j.at("level_norms").get<std::vector<double>>();
  r.event_sector_weight = j.at("event_sector_weight").get<double>();
  r.no_event_sector_weight = j.at("no_event_sector_weight").get<double>();
  for (const auto& p : j.at("pointer_terms"))
    r.pointer_terms.push_back({p.at("outcome").get<std::string>(), p.at("t_index").get<std::size_t>(),
                               p.at("arrangement").get<std::string>(), complex_from_json(p.at("coefficient"))});
  r.pointer_weights = j.at("pointer_weights").get<std::vector<double>>();
  if (!j.at("oracle_deviation").is_null()) r.oracle_deviation = j.at("oracle_deviation").get<double>();
  r.oracle_tolerance = j.at("oracle_tolerance").get<double>();
  for (const auto& e : j.at("residuals")) r.residuals.emplace_back(e.at("clock_dim").get<std::size_t>(), e.at("residual").get<double>());
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  return r;
}

inline std::string export_structured(const RunReport& r) { return to_json(r).dump(2) + "\n"; }

inline RunReport parse_structured(const std::string& text) {
  try {
    return report_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("structured report: ") + e.what());
  }
}

// Format "csv" or "structured".
inline std::string export_distribution(const RunReport& r, const std::string& format) {
  if (format == "structured") return export_structured(r);
  if (format != "csv") throw ValidationError("unknown export format '" + format + "'");
  if (r.command == "environment") return export_pointer_csv(r);
  if (r.command == "wdw-sweep") return export_residual_csv(r);
  return export_csv(r);
}

namespace detail {

inline void fill_single_event(RunReport& r, const SingleEventSolution& s, const std::vector<std::string>& labels) {
  JointDistribution j = joint_distribution(s);
  for (const auto& e : j.entries)
    if (e.amplitude != Complex{0.0}) r.joint.push_back({e.time_index, e.time, labels[e.outcome], e.probability, e.amplitude});
  r.marginal = outcome_marginal(j).probabilities;
  r.no_event_weight = j.no_event_weight;
  r.gamma_tail = j.gamma_tail;
  r.self_check = j.total();
  r.complete = j.complete;
}

}  // namespace detail

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"single-event", "chain", "environment", "oracle-check", "wdw-sweep"};
  return names;
}

// Runs one subcommand. `format` selects the payload; `oracle` forces an oracle
// comparison for single-event runs.
inline RunResult run_scenario(const ScenarioConfig& c, const std::string& command, const std::string& format,
                              bool oracle = false, std::optional<double> tolerance = std::nullopt) {
  RunResult out;
  RunReport& r = out.report;
  r.command = command;
  r.grid = c.grid;
  r.outcomes = c.model().outcomes.labels();
  r.warnings = c.warnings;
  r.oracle_tolerance = tolerance.value_or(c.oracle_tolerance);
  std::string payload_override;

  if (command == "single-event" || command == "oracle-check") {
    SingleEventSolution s = solve_single_event(c.model(), c.grid);
    detail::fill_single_event(r, s, r.outcomes);
    if (command == "oracle-check" || oracle || c.oracle_enabled) {
      OracleExtraction ext = simulate_and_extract(build_total_hamiltonian(oracle_spec_for(c)));
      double dev = std::abs(s.no_event_weight() - ext.no_event_weight);
      for (const auto& e : joint_distribution(s).entries)
        dev = std::max(dev, std::abs(e.probability - ext.joint[e.time_index][e.outcome]));
      r.oracle_deviation = dev;
      out.oracle_mismatch = dev > r.oracle_tolerance;
    }
  } else if (command == "chain") {
    GlobalEventState g = assemble_global_state(c.chain, c.grid);
    detail::fill_single_event(r, g.evaluator()->single_event(), r.outcomes);
    r.max_events = c.chain.max_events;
    r.history_count = g.size();
    r.level_norms = event_level_norms(g.table(), c.chain.max_events);
    SectorSplit split = split_event_no_event(g);
    r.event_sector_weight = split.event_weight;
    r.no_event_sector_weight = split.no_event_weight;
    if (format == "csv") payload_override = serialize(g);
  } else if (command == "environment") {
    SingleEventSolution s = solve_single_event(c.model(), c.grid);
    detail::fill_single_event(r, s, r.outcomes);
    PointerDecomposition p = decohere_pointer(s, std::max(c.horizon, c.grid.steps));
    for (const auto& grp : p.groups) {
      r.pointer_weights.push_back(grp.weight);
      for (const auto& t : grp.terms)
        r.pointer_terms.push_back({r.outcomes[grp.outcome], t.time_index, to_string(t.arrangement, r.outcomes), t.coefficient});
    }
  } else if (command == "wdw-sweep") {
    TotalHamiltonian h = build_total_hamiltonian(oracle_spec_for(c));
    std::vector<std::size_t> dims = c.clock_dims;
    const std::size_t base = c.grid.steps + 1;
    if (dims.empty()) dims = {base, 2 * base, 4 * base};
    for (auto d : dims) r.residuals.emplace_back(d, wdw_residual(h, d).residual);
  } else {
    throw ValidationError("unknown subcommand '" + command + "'");
  }
  out.payload = payload_override.empty() ? export_distribution(r, format) : payload_override;
  return out;
}

// Short key=value summary for the terminal.
inline std::string summarize(const RunResult& res) {
  const RunReport& r = res.report;
  std::string out = fmt::format("command={}\nsteps={}\n", r.command, r.grid.steps);
  if (r.command != "wdw-sweep") {
    out += fmt::format("sum_probability={:.17g}\nno_event_weight={:.17g}\ngamma_tail={:.17g}\nself_check={:.17g}\ncomplete={}\n",
                       joint_sum(r), r.no_event_weight, r.gamma_tail, r.self_check, r.complete);
    for (std::size_t a = 0; a < r.marginal.size(); ++a) out += fmt::format("P({})={:.17g}\n", r.outcomes[a], r.marginal[a]);
  }
  if (r.command == "chain") {
    out += fmt::format("histories={}\nevent_sector_weight={:.17g}\nno_event_sector_weight={:.17g}\n", r.history_count,
                       r.event_sector_weight, r.no_event_sector_weight);
    for (std::size_t e = 0; e < r.level_norms.size(); ++e) out += fmt::format("level_norm[{}]={:.17g}\n", e + 1, r.level_norms[e]);
  }
  for (std::size_t a = 0; a < r.pointer_weights.size(); ++a) out += fmt::format("pointer_weight({})={:.17g}\n", r.outcomes[a], r.pointer_weights[a]);
  for (const auto& [d, v] : r.residuals) out += fmt::format("residual[{}]={:.17g}\n", d, v);
  if (r.oracle_deviation)
    out += fmt::format("oracle_deviation={:.3e}\noracle_tolerance={:.3e}\noracle={}\n", *r.oracle_deviation, r.oracle_tolerance,
                       res.oracle_mismatch ? "mismatch" : "ok");
  return out;
}

}  // namespace eventium
