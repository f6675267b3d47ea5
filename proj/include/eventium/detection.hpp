// Single-event detection on a discrete clock grid: branch amplitudes,
// joint time/outcome distribution, marginals and the clock-conditioned state.
#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "eventium/errors.hpp"
#include "eventium/hilbert.hpp"
#include "eventium/history.hpp"

namespace eventium {

// t_k = t0 + k dt, k = 0..steps. Times are always recomputed from k.
struct ClockGrid {
  double t0 = 0.0;
  double dt = 1.0;
  std::size_t steps = 0;

  double time(std::size_t k) const noexcept { return t0 + static_cast<double>(k) * dt; }
  std::size_t size() const noexcept { return steps + 1; }
  bool operator==(const ClockGrid&) const = default;
};

inline void validate_grid(const ClockGrid& g) {
  if (!std::isfinite(g.t0)) throw ValidationError("grid: t0 is not finite");
  if (!std::isfinite(g.dt) || g.dt <= 0.0) throw ValidationError("grid: dt must be positive and finite");
  if (g.steps > 0 && !(g.time(1) > g.time(0))) throw ValidationError("grid: dt vanishes against t0");
}

inline std::vector<double> grid_times(const ClockGrid& g) {
  validate_grid(g);
  std::vector<double> out(g.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = g.time(k);
  return out;
}

// delta p for a constant detection rate lambda: 1 - exp(-lambda dt).
inline std::vector<double> constant_rate_schedule(double rate, const ClockGrid& g) {
  if (!std::isfinite(rate) || rate < 0.0) throw ValidationError("rate must be non-negative");
  return std::vector<double>(g.steps, -std::expm1(-rate * g.dt));
}

// delta p for a kick of strength g over one step.
inline double kick_probability(double coupling, double dt) {
  double s = std::sin(coupling * dt);
  return s * s;
}

struct MeasurementModel {
  ProjectiveMeasurement outcomes;
  OperatorMatrix free_h;
  StateVector initial;
  // delta p_(k) and phi_(k) for k = 1..N stored at [k - 1]; phases may be empty.
  std::vector<double> step_probs;
  std::vector<double> step_phases;
  // Optional per-step operators; empty means the free propagator, a single
  // entry is used for every step.
  std::vector<OperatorMatrix> u_nodetect;
  std::vector<OperatorMatrix> u_detect;
  std::optional<double> interaction_time;
};

namespace detail {

inline const OperatorMatrix* step_operator(const std::vector<OperatorMatrix>& ops, std::size_t k) {
  if (ops.empty()) return nullptr;
  if (ops.size() == 1) return &ops.front();
  return &ops.at(k - 1);
}

inline double step_phase(const MeasurementModel& m, std::size_t k) {
  return m.step_phases.empty() ? 0.0 : m.step_phases[k - 1];
}

}  // namespace detail

// Throws on invalid input; returns advisory warnings.
inline std::vector<std::string> validate_model(const MeasurementModel& m, const ClockGrid& g) {
  validate_grid(g);
  std::vector<std::string> warnings;
  const std::size_t n = g.steps;
  const std::size_t d = m.initial.dim();
  if (d == 0) throw ValidationError("model: missing initial state");
  if (!m.initial.is_normalized(1e-9)) throw ValidationError("model: initial state is not normalized");
  if (m.outcomes.size() == 0 || m.outcomes.dim() != d) throw ValidationError("model: outcome dimension mismatch");
  if (m.free_h.rows() != d || !m.free_h.is_hermitian()) throw ValidationError("model: free Hamiltonian must be hermitian on the system");
  if (m.step_probs.size() < n) throw ValidationError("model: detection schedule shorter than the grid");
  for (std::size_t k = 0; k < n; ++k)
    if (!(m.step_probs[k] >= 0.0 && m.step_probs[k] <= 1.0))
      throw ValidationError(fmt::format("model: delta p at step {} outside [0, 1]", k + 1));
  if (!m.step_phases.empty()) {
    if (m.step_phases.size() < n) throw ValidationError("model: phase schedule shorter than the grid");
    for (std::size_t k = 0; k < n; ++k)
      if (!std::isfinite(m.step_phases[k])) throw ValidationError("model: non-finite phase");
  }
  for (const auto* ops : {&m.u_nodetect, &m.u_detect}) {
    if (ops->size() > 1 && ops->size() < n) throw ValidationError("model: per-step operator list shorter than the grid");
    for (const auto& u : *ops)
      if (u.rows() != d || u.cols() != d) throw ValidationError("model: step operator dimension mismatch");
  }
  if (!m.u_nodetect.empty() || !m.u_detect.empty()) {
    OperatorMatrix free_step = propagator(m.free_h, g.dt);
    for (std::size_t k = 1; k <= n; ++k) {
      const auto* u0 = detail::step_operator(m.u_nodetect, k);
      const auto* um = detail::step_operator(m.u_detect, k);
      const Matrix& a = u0 ? u0->matrix() : free_step.matrix();
      const Matrix& b = um ? um->matrix() : free_step.matrix();
      double p = m.step_probs[k - 1];
      Matrix total = (1.0 - p) * (a.adjoint() * a) + p * (b.adjoint() * b);
      if (max_abs(total - Matrix::Identity(total.rows(), total.cols())) > 1e-10)
        throw ValidationError(fmt::format("model: step {} operators do not preserve the total norm", k));
    }
  }
  if (m.interaction_time && g.dt > *m.interaction_time / 10.0)
    warnings.push_back(fmt::format("grid step {} exceeds a tenth of the interaction time {}", g.dt, *m.interaction_time));
  return warnings;
}

// Gamma_k (no detection through step k) and chi_k (first detection at step k),
// index k = 0..N; chi[0] = 0, gamma[0] = 1.
struct BranchTable {
  std::vector<Complex> gamma;
  std::vector<Complex> chi;

  std::size_t steps() const noexcept { return gamma.empty() ? 0 : gamma.size() - 1; }

  // sum |chi|^2 + |Gamma_N|^2
  double completeness() const {
    double s = std::norm(gamma.back());
    for (const auto& c : chi) s += std::norm(c);
    return s;
  }
};

inline BranchTable branch_table_from(const std::vector<double>& probs, const std::vector<double>& phases, std::size_t n) {
  BranchTable t;
  t.gamma.assign(n + 1, Complex{1.0});
  t.chi.assign(n + 1, Complex{0.0});
  for (std::size_t k = 1; k <= n; ++k) {
    double p = probs[k - 1];
    double phi = phases.empty() ? 0.0 : phases[k - 1];
    t.chi[k] = std::sqrt(p) * t.gamma[k - 1];
    t.gamma[k] = t.gamma[k - 1] * std::sqrt(1.0 - p) * std::polar(1.0, phi);
  }
  return t;
}

inline BranchTable branch_amplitudes(const MeasurementModel& m, const ClockGrid& g) {
  validate_grid(g);
  if (m.step_probs.size() < g.steps) throw ValidationError("model: detection schedule shorter than the grid");
  for (std::size_t k = 0; k < g.steps; ++k)
    if (!(m.step_probs[k] >= 0.0 && m.step_probs[k] <= 1.0))
      throw ValidationError(fmt::format("model: delta p at step {} outside [0, 1]", k + 1));
  if (!m.step_phases.empty() && m.step_phases.size() < g.steps) throw ValidationError("model: phase schedule shorter than the grid");
  return branch_table_from(m.step_probs, m.step_phases, g.steps);
}

// Everything needed for the single-event quantities, computed in one pass.
struct SingleEventSolution {
  ClockGrid grid;
  BranchTable branches;
  // psi[k][a] = <a|U^(k)|0>, collapsed[k][a] the post-event system state; row 0 unused.
  std::vector<std::vector<Complex>> psi;
  std::vector<std::vector<StateVector>> collapsed;
  // U^0(t_k, t_0)|0>, k = 0..N.
  std::vector<StateVector> survivor;
  std::vector<std::string> warnings;

  std::size_t outcomes() const noexcept { return psi.empty() ? 0 : psi.front().size(); }
  Complex event_amplitude(std::size_t k, std::size_t a) const { return psi[k][a] * branches.chi[k]; }
  double probability(std::size_t k, std::size_t a) const { return std::norm(psi[k][a]) * std::norm(branches.chi[k]); }
  double no_event_weight() const { return std::norm(branches.gamma.back()) * survivor.back().squared_norm(); }
};

inline SingleEventSolution solve_single_event(const MeasurementModel& m, const ClockGrid& g) {
  SingleEventSolution s;
  s.warnings = validate_model(m, g);
  s.grid = g;
  s.branches = branch_amplitudes(m, g);
  const std::size_t n = g.steps;
  const std::size_t na = m.outcomes.size();
  const std::size_t d = m.initial.dim();
  OperatorMatrix free_step = propagator(m.free_h, g.dt);
  s.psi.assign(n + 1, std::vector<Complex>(na, Complex{0.0}));
  s.collapsed.assign(n + 1, std::vector<StateVector>(na, StateVector::null(d)));
  s.survivor.reserve(n + 1);
  s.survivor.push_back(m.initial);
  for (std::size_t k = 1; k <= n; ++k) {
    const auto* u0 = detail::step_operator(m.u_nodetect, k);
    const auto* um = detail::step_operator(m.u_detect, k);
    StateVector next = (u0 ? *u0 : free_step) * s.survivor.back();
    StateVector pre = (u0 == um) ? next : (um ? *um : free_step) * s.survivor.back();
    for (std::size_t a = 0; a < na; ++a) {
      auto r = m.outcomes.apply(a, pre);
      s.psi[k][a] = r.amplitude;
      s.collapsed[k][a] = std::move(r.collapsed);
    }
    s.survivor.push_back(std::move(next));
  }
  return s;
}

struct JointEntry {
  std::size_t time_index = 0;
  double time = 0.0;
  std::size_t outcome = 0;
  double probability = 0.0;
  Complex amplitude;
};

// Rows in grid-then-outcome order.
struct JointDistribution {
  std::vector<JointEntry> entries;
  std::size_t outcomes = 0;
  double no_event_weight = 0.0;
  double gamma_tail = 0.0;  // |Gamma_N|^2
  bool complete = false;

  double at(std::size_t k, std::size_t a) const { return entries.at((k - 1) * outcomes + a).probability; }
  double event_total() const {
    double s = 0.0;
    for (const auto& e : entries) s += e.probability;
    return s;
  }
  double total() const { return event_total() + no_event_weight; }
};

inline JointDistribution joint_distribution(const SingleEventSolution& s, double epsilon = 1e-6) {
  JointDistribution j;
  j.outcomes = s.outcomes();
  for (std::size_t k = 1; k <= s.grid.steps; ++k)
    for (std::size_t a = 0; a < j.outcomes; ++a)
      j.entries.push_back({k, s.grid.time(k), a, s.probability(k, a), s.event_amplitude(k, a)});
  j.gamma_tail = std::norm(s.branches.gamma.back());
  j.no_event_weight = s.no_event_weight();
  j.complete = j.gamma_tail < epsilon;
  return j;
}

inline JointDistribution joint_distribution(const MeasurementModel& m, const ClockGrid& g, double epsilon = 1e-6) {
  return joint_distribution(solve_single_event(m, g), epsilon);
}

struct MarginalDistribution {
  std::vector<double> probabilities;
  double no_event_weight = 0.0;
  bool complete = false;

  double total() const {
    double s = no_event_weight;
    for (double p : probabilities) s += p;
    return s;
  }
};

inline MarginalDistribution outcome_marginal(const JointDistribution& j) {
  MarginalDistribution out;
  out.probabilities.assign(j.outcomes, 0.0);
  for (const auto& e : j.entries) out.probabilities[e.outcome] += e.probability;
  out.no_event_weight = j.no_event_weight;
  out.complete = j.complete;
  return out;
}

inline MarginalDistribution outcome_marginal(const MeasurementModel& m, const ClockGrid& g, double epsilon = 1e-6) {
  return outcome_marginal(joint_distribution(m, g, epsilon));
}

inline MarginalDistribution marginal_distribution(const MeasurementModel& m, const ClockGrid& g, double epsilon = 1e-6) {
  return outcome_marginal(m, g, epsilon);
}

struct ConditionedBranch {
  EventHistory history;
  Complex amplitude;
  StateVector system;

  double weight() const { return std::norm(amplitude) * system.squared_norm(); }
};

// The relative state of system and records given the clock reads t_beta.
struct ConditionedState {
  std::size_t beta = 0;
  std::vector<ConditionedBranch> branches;

  double total_weight() const {
    double s = 0.0;
    for (const auto& b : branches) s += b.weight();
    return s;
  }
  const ConditionedBranch* find(const EventHistory& h) const {
    for (const auto& b : branches)
      if (b.history == h) return &b;
    return nullptr;
  }
};

// Branches: no event [(beta,0)], event now [(beta,a)], earlier event
// [(k,a),(beta,0)]. Branches with exactly zero amplitude are dropped.
inline ConditionedState conditioned_state(const SingleEventSolution& s, const OperatorMatrix& free_h, std::size_t beta) {
  if (beta > s.grid.steps) throw ValidationError("conditioned_state: clock index beyond the grid");
  ConditionedState out;
  out.beta = beta;
  const auto b32 = static_cast<std::uint32_t>(beta);
  if (s.branches.gamma[beta] != Complex{0.0}) out.branches.push_back({EventHistory{{b32, kNoEvent}}, s.branches.gamma[beta], s.survivor[beta]});
  if (beta == 0) return out;
  HermitianSpectrum spectrum(free_h);
  for (std::size_t k = 1; k <= beta; ++k) {
    OperatorMatrix u = spectrum.evolution(static_cast<double>(beta - k) * s.grid.dt);
    for (std::size_t a = 0; a < s.outcomes(); ++a) {
      Complex amp = s.event_amplitude(k, a);
      if (amp == Complex{0.0}) continue;
      EventRecord ev{static_cast<std::uint32_t>(k), outcome_code(a)};
      if (k == beta)
        out.branches.push_back({EventHistory{ev}, amp, s.collapsed[k][a]});
      else
        out.branches.push_back({EventHistory{ev, {b32, kNoEvent}}, amp, u * s.collapsed[k][a]});
    }
  }
  return out;
}

inline ConditionedState conditioned_state(const MeasurementModel& m, const ClockGrid& g, std::size_t beta) {
  return conditioned_state(solve_single_event(m, g), m.free_h, beta);
}

}  // namespace eventium
