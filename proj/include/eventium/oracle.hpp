// Microscopic system + timer + detector simulation, used as an independent
// check of the branch-amplitude formulas, and the constraint residual of the
// clock-plus-rest timeless state.
//
// One step of length dt applies, in order:
//   1. exp(-i H_S dt) on the system;
//   2. exp(-i V_TD dt) on each timer/detector pair, V_TD = H_T (x) |0><0|_D,
//      which advances the timer by one reading while its detector is ready;
//   3. the system/detector kick exp(-i g_k dt V_SD), acting only on branches
//      whose timer shows the current reading (the ready branch); later
//      detectors are kicked first and only after the previous one fired;
//   4. the ready-level phase exp(-i eps dt |0><0|_D).
// V_SD = sum_a c_a M_a (x) i(|a><0| - |0><a|) moves amplitude sin(c_a g dt)
// into detector level a, so delta p = sin^2(g dt) for unit channel scale.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "eventium/chains.hpp"
#include "eventium/detection.hpp"
#include "eventium/errors.hpp"
#include "eventium/hilbert.hpp"
#include "eventium/history.hpp"

namespace eventium {

// Hermitian H on `dim` readings with exp(-i H spacing)|j> = |j + 1 mod dim>.
inline OperatorMatrix cyclic_shift_generator(std::size_t dim, double spacing) {
  if (dim == 0) throw ValidationError("cyclic generator: zero dimension");
  if (!(spacing > 0.0) || !std::isfinite(spacing)) throw ValidationError("cyclic generator: spacing must be positive");
  check_operator_dim(dim, "cyclic generator");
  const auto n = static_cast<Eigen::Index>(dim);
  const double two_pi = 2.0 * std::numbers::pi;
  Matrix h = Matrix::Zero(n, n);
  for (Eigen::Index m = 0; m < n; ++m) {
    // Eigenvector u_m(j) = exp(-2 pi i m j / D) / sqrt(D) has shift eigenvalue
    // exp(2 pi i m / D); pick the frequency closest to zero.
    double centered = static_cast<double>(m);
    if (2 * m > n) centered -= static_cast<double>(n);
    double omega = -two_pi * centered / (static_cast<double>(n) * spacing);
    Vector u(n);
    for (Eigen::Index j = 0; j < n; ++j) u(j) = std::polar(1.0 / std::sqrt(static_cast<double>(n)), -two_pi * static_cast<double>(m * j % n) / static_cast<double>(n));
    h += omega * u * u.adjoint();
  }
  h = 0.5 * (h + h.adjoint()).eval();
  return OperatorMatrix(std::move(h));
}

struct OracleSpec {
  OperatorMatrix system_h;
  ProjectiveMeasurement outcomes;
  StateVector initial;
  ClockGrid grid;
  // Kick strength g_(k) of the first detector for k = 1..N.
  std::vector<double> couplings;
  // Later detectors, indexed by steps since their window opened; empty reuses `couplings`.
  std::vector<double> chain_couplings;
  // Per-outcome factor c_a on the kick; empty means all 1.
  std::vector<double> channel_scale;
  double ready_energy = 0.0;
  std::size_t detectors = 1;
  std::size_t dead_time_steps = 0;
};

inline void validate_oracle_spec(const OracleSpec& s) {
  validate_grid(s.grid);
  const std::size_t d = s.initial.dim();
  if (d == 0 || !s.initial.is_normalized(1e-9)) throw ValidationError("oracle: initial system state must be normalized");
  if (s.system_h.rows() != d || !s.system_h.is_hermitian()) throw ValidationError("oracle: system Hamiltonian must be hermitian on the system");
  if (s.outcomes.dim() != d) throw ValidationError("oracle: outcome dimension mismatch");
  if (s.couplings.size() < s.grid.steps) throw ValidationError("oracle: coupling schedule shorter than the grid");
  if (!s.chain_couplings.empty() && s.chain_couplings.size() + 1 < s.grid.steps)
    throw ValidationError("oracle: chain coupling schedule too short");
  if (!s.channel_scale.empty() && s.channel_scale.size() != s.outcomes.size()) throw ValidationError("oracle: channel scale count mismatch");
  if (s.detectors == 0) throw ValidationError("oracle: need at least one detector");
  for (double g : s.couplings)
    if (!std::isfinite(g)) throw ValidationError("oracle: non-finite coupling");
  if (!std::isfinite(s.ready_energy)) throw ValidationError("oracle: non-finite ready energy");
}

struct TotalHamiltonian {
  OracleSpec spec;
  std::vector<std::size_t> dims;    // S, T1, D1, T2, D2, ...
  OperatorMatrix timer_h;           // H_T on one timer
  OperatorMatrix timer_detector;    // V_TD on one timer (x) detector
  OperatorMatrix coupling_unit;     // V_SD at g = 1 on system (x) detector
  double nominal_coupling = 0.0;    // g used by the static dense form

  std::size_t dim() const {
    std::size_t n = 1;
    for (auto d : dims) n = checked_product(n, d);
    return n;
  }
  std::size_t detector_levels() const { return spec.outcomes.size() + 1; }

  // H_S + g V_SD + V_TD + eps |0><0|_D on S (x) T (x) D; single detector only.
  OperatorMatrix dense() const {
    if (spec.detectors != 1) throw ValidationError("dense total Hamiltonian is available for one detector only");
    const std::size_t n = dim();
    check_operator_dim(n, "total Hamiltonian");
    const std::size_t ds = dims[0], dt = dims[1], dd = dims[2];
    Matrix h = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    auto at = [dt, dd](std::size_t s, std::size_t t, std::size_t d) { return static_cast<Eigen::Index>((s * dt + t) * dd + d); };
    for (std::size_t s = 0; s < ds; ++s)
      for (std::size_t t = 0; t < dt; ++t)
        for (std::size_t d = 0; d < dd; ++d)
          for (std::size_t s2 = 0; s2 < ds; ++s2)
            for (std::size_t d2 = 0; d2 < dd; ++d2) {
              Complex v = nominal_coupling * coupling_unit(s * dd + d, s2 * dd + d2);
              if (d == d2) v += spec.system_h(s, s2);
              h(at(s, t, d), at(s2, t, d2)) += v;
            }
    for (std::size_t s = 0; s < ds; ++s)
      for (std::size_t t = 0; t < dt; ++t)
        for (std::size_t d = 0; d < dd; ++d) {
          for (std::size_t t2 = 0; t2 < dt; ++t2)
            for (std::size_t d2 = 0; d2 < dd; ++d2) h(at(s, t, d), at(s, t2, d2)) += timer_detector(t * dd + d, t2 * dd + d2);
          if (d == 0) h(at(s, t, 0), at(s, t, 0)) += spec.ready_energy;
        }
    return OperatorMatrix(std::move(h));
  }

  // |0>_S-side initial state (x) |t_0>_T (x) |0>_D for every pair.
  StateVector initial_state() const {
    StateVector psi = spec.initial;
    for (std::size_t e = 0; e < spec.detectors; ++e) {
      psi = tensor_product(psi, StateVector::basis(dims[1 + 2 * e], 0));
      psi = tensor_product(psi, StateVector::basis(dims[2 + 2 * e], 0));
    }
    return psi;
  }
};

inline TotalHamiltonian build_total_hamiltonian(const OracleSpec& s) {
  validate_oracle_spec(s);
  TotalHamiltonian h;
  h.spec = s;
  const std::size_t ds = s.initial.dim();
  const std::size_t nt = s.grid.steps + 1;
  const std::size_t nd = s.outcomes.size() + 1;
  h.dims.push_back(ds);
  for (std::size_t e = 0; e < s.detectors; ++e) {
    h.dims.push_back(nt);
    h.dims.push_back(nd);
  }
  check_state_dim(h.dim(), "oracle state");
  check_operator_dim(checked_product(nt, nd), "timer/detector pair");
  check_operator_dim(checked_product(ds, nd), "system/detector pair");

  h.timer_h = cyclic_shift_generator(nt, s.grid.dt);
  Matrix ready = Matrix::Zero(static_cast<Eigen::Index>(nd), static_cast<Eigen::Index>(nd));
  ready(0, 0) = 1.0;
  h.timer_detector = tensor_product(h.timer_h, OperatorMatrix(ready));

  Matrix v = Matrix::Zero(static_cast<Eigen::Index>(ds * nd), static_cast<Eigen::Index>(ds * nd));
  for (std::size_t a = 0; a < s.outcomes.size(); ++a) {
    double c = s.channel_scale.empty() ? 1.0 : s.channel_scale[a];
    Matrix lift = Matrix::Zero(static_cast<Eigen::Index>(nd), static_cast<Eigen::Index>(nd));
    lift(static_cast<Eigen::Index>(a + 1), 0) = kI;
    lift(0, static_cast<Eigen::Index>(a + 1)) = -kI;
    v += c * tensor_product(s.outcomes.projector(a), OperatorMatrix(lift)).matrix();
  }
  h.coupling_unit = OperatorMatrix(std::move(v));
  h.nominal_coupling = s.couplings.empty() ? 0.0 : s.couplings.front();
  return h;
}

namespace detail {

// Propagates the full state step by step; `observe(j, psi)` runs after each step.
template <typename Observer>
inline std::pair<Vector, double> run_oracle(const TotalHamiltonian& h, Observer&& observe) {
  const auto& s = h.spec;
  const std::size_t n = s.grid.steps;
  const std::size_t pairs = s.detectors;
  TensorLayout layout(h.dims);
  const Matrix u_s = propagator(s.system_h, s.grid.dt).matrix();
  const Matrix shift = propagator(h.timer_detector, s.grid.dt).matrix();
  const std::size_t nd = h.detector_levels();
  Matrix ready_phase = Matrix::Identity(static_cast<Eigen::Index>(nd), static_cast<Eigen::Index>(nd));
  ready_phase(0, 0) = std::exp(-kI * (s.ready_energy * s.grid.dt));

  std::map<double, Matrix> kicks;
  auto kick = [&](double g) -> const Matrix& {
    auto it = kicks.find(g);
    if (it == kicks.end()) it = kicks.emplace(g, propagator(g * h.coupling_unit, s.grid.dt).matrix()).first;
    return it->second;
  };
  const auto& later = s.chain_couplings.empty() ? s.couplings : s.chain_couplings;

  Vector psi = h.initial_state().amplitudes();
  double drift = 0.0;
  for (std::size_t j = 1; j <= n; ++j) {
    apply_local(layout, {0}, u_s, psi);
    for (std::size_t e = 0; e < pairs; ++e) apply_local(layout, {1 + 2 * e, 2 + 2 * e}, shift, psi);
    for (std::size_t e = pairs; e-- > 0;) {
      const std::size_t tf = 1 + 2 * e, df = 2 + 2 * e;
      if (e == 0) {
        double g = s.couplings[j - 1];
        if (g != 0.0) apply_local(layout, {0, df}, kick(g), psi, [tf, j](std::span<const std::size_t> dg) { return dg[tf] == j; });
        continue;
      }
      const std::size_t ptf = tf - 2, pdf = df - 2;
      for (std::size_t k = 1; k + s.dead_time_steps < j; ++k) {
        double g = later[j - k - s.dead_time_steps - 1];
        if (g == 0.0) continue;
        apply_local(layout, {0, df}, kick(g), psi, [tf, ptf, pdf, j, k](std::span<const std::size_t> dg) {
          return dg[tf] == j && dg[ptf] == k && dg[pdf] != 0;
        });
      }
    }
    if (s.ready_energy != 0.0)
      for (std::size_t e = 0; e < pairs; ++e) apply_local(layout, {2 + 2 * e}, ready_phase, psi);
    drift = std::max(drift, std::abs(psi.norm() - 1.0));
    if (drift > 1e-8)
      throw OracleError(fmt::format("oracle: norm drift {:.3e} at step {} (dt = {}); reduce the step or the coupling", drift, j, s.grid.dt));
    observe(j, layout, psi);
  }
  return {std::move(psi), drift};
}

// System vector at fixed digits of every other factor.
inline Vector system_slice(const TensorLayout& layout, const Vector& psi, std::vector<std::size_t> digits) {
  Vector out(static_cast<Eigen::Index>(layout.dim(0)));
  for (std::size_t s = 0; s < layout.dim(0); ++s) {
    digits[0] = s;
    out(static_cast<Eigen::Index>(s)) = psi(static_cast<Eigen::Index>(layout.flat(digits)));
  }
  return out;
}

inline Complex unit_phase(Complex z) { return z == Complex{0.0} ? Complex{1.0} : z / std::abs(z); }

}  // namespace detail

struct OracleExtraction {
  ClockGrid grid;
  BranchTable branches;                    // Gamma_k, chi_k read off the simulation
  std::vector<std::vector<double>> joint;  // [k][a], row 0 unused
  // Unnormalized system branch at the last reading: detector fired a at t_k.
  std::vector<std::vector<Vector>> branch_states;
  Vector no_event_state;
  double no_event_weight = 0.0;
  double max_norm_drift = 0.0;
};

// Single detector: runs the simulation from |0>_S |t_0> |0>_D and reads off
// the branch table and the joint distribution.
inline OracleExtraction simulate_and_extract(const TotalHamiltonian& h) {
  const auto& s = h.spec;
  if (s.detectors != 1) throw ValidationError("simulate_and_extract: single detector only");
  const std::size_t n = s.grid.steps;
  const std::size_t na = s.outcomes.size();
  OracleExtraction out;
  out.grid = s.grid;
  out.branches.gamma.assign(n + 1, Complex{1.0});
  out.branches.chi.assign(n + 1, Complex{0.0});
  const Matrix u_s = propagator(s.system_h, s.grid.dt).matrix();
  Vector reference = s.initial.amplitudes();

  auto observe = [&](std::size_t j, const TensorLayout& layout, const Vector& psi) {
    reference = u_s * reference;
    Vector stay = detail::system_slice(layout, psi, {0, j, 0});
    Vector fired = Vector::Zero(stay.size());
    double fired_sq = 0.0;
    for (std::size_t a = 0; a < na; ++a) {
      Vector d = detail::system_slice(layout, psi, {0, j, a + 1});
      fired_sq += d.squaredNorm();
      fired += d;
    }
    out.branches.gamma[j] = stay.norm() * detail::unit_phase(reference.dot(stay));
    out.branches.chi[j] = std::sqrt(fired_sq) * detail::unit_phase(reference.dot(fired));
  };
  auto [psi, drift] = detail::run_oracle(h, observe);
  out.max_norm_drift = drift;

  TensorLayout layout(h.dims);
  out.joint.assign(n + 1, std::vector<double>(na, 0.0));
  out.branch_states.assign(n + 1, std::vector<Vector>(na));
  for (std::size_t k = 1; k <= n; ++k)
    for (std::size_t a = 0; a < na; ++a) {
      out.branch_states[k][a] = detail::system_slice(layout, psi, {0, k, a + 1});
      out.joint[k][a] = out.branch_states[k][a].squaredNorm();
    }
  out.no_event_state = detail::system_slice(layout, psi, {0, n, 0});
  out.no_event_weight = out.no_event_state.squaredNorm();
  return out;
}

struct ChainOracleRun {
  // Probabilities at the final clock reading, keyed like the chain histories:
  // events in order, closed by (t_N, 0) unless every detector fired or the
  // last event happened at t_N.
  std::vector<std::pair<EventHistory, double>> probabilities;
  double max_norm_drift = 0.0;

  double total() const {
    double s = 0.0;
    for (const auto& [h, p] : probabilities) s += p;
    return s;
  }
};

inline constexpr double kLeakWeight = 1e-20;

inline ChainOracleRun simulate_event_chain(const TotalHamiltonian& h) {
  auto [psi, drift] = detail::run_oracle(h, [](std::size_t, const TensorLayout&, const Vector&) {});
  TensorLayout layout(h.dims);
  std::map<EventHistory, double> acc;
  const auto n = static_cast<std::uint32_t>(h.spec.grid.steps);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    double w = std::norm(psi(static_cast<Eigen::Index>(i)));
    if (w == 0.0) continue;
    EventHistory key;
    bool consistent = true;
    for (std::size_t e = 0; e < h.spec.detectors; ++e) {
      auto t = static_cast<std::uint32_t>(layout.digit(i, 1 + 2 * e));
      auto d = static_cast<std::uint32_t>(layout.digit(i, 2 + 2 * e));
      if (d == 0) {
        consistent = t == n;
        // An event at the last reading leaves no later reading to close on.
        if (key.empty() || key.back().time_index < n) key.push_back({n, kNoEvent});
        break;
      }
      consistent = consistent && (key.empty() || t > key.back().time_index);
      key.push_back({t, d});
    }
    // Round-off in the timer shift leaves ~1e-32 weight on impossible readings.
    if (!consistent) {
      if (w > kLeakWeight) throw OracleError(fmt::format("oracle: weight {:.3e} on an impossible timer reading", w));
      continue;
    }
    acc[key] += w;
  }
  ChainOracleRun out;
  out.probabilities.assign(acc.begin(), acc.end());
  out.max_norm_drift = drift;
  return out;
}

struct CalibratedSchedule {
  std::vector<double> step_probs;
  std::vector<double> step_phases;
  std::optional<std::size_t> truncated_at;  // first step with Gamma_{k-1} ~ 0
  std::vector<std::string> warnings;
};

inline CalibratedSchedule calibrate_rates(const BranchTable& t) {
  CalibratedSchedule out;
  for (std::size_t k = 1; k <= t.steps(); ++k) {
    double prev = std::abs(t.gamma[k - 1]);
    if (prev <= 1e-12) {
      out.truncated_at = k;
      out.warnings.push_back(fmt::format("no survival amplitude left before step {}; schedule truncated to {} steps", k, k - 1));
      break;
    }
    out.step_probs.push_back(std::clamp(std::norm(t.chi[k]) / (prev * prev), 0.0, 1.0));
    out.step_phases.push_back(t.gamma[k] == Complex{0.0} ? 0.0 : std::arg(t.gamma[k] / t.gamma[k - 1]));
  }
  return out;
}

// Kick strengths that realize a model's schedule; phases must be uniform.
inline OracleSpec ladder_for_schedule(const MeasurementModel& m, const ClockGrid& g, std::size_t detectors = 1,
                                      std::size_t dead_time_steps = 0) {
  validate_model(m, g);
  if (!m.u_nodetect.empty() || !m.u_detect.empty()) throw ValidationError("oracle: custom step operators have no ladder realization");
  OracleSpec s;
  s.system_h = m.free_h;
  s.outcomes = m.outcomes;
  s.initial = m.initial;
  s.grid = g;
  s.detectors = detectors;
  s.dead_time_steps = dead_time_steps;
  for (std::size_t k = 0; k < g.steps; ++k) s.couplings.push_back(std::asin(std::sqrt(m.step_probs[k])) / g.dt);
  if (!m.step_phases.empty() && g.steps > 0) {
    double phi = m.step_phases.front();
    for (std::size_t k = 0; k < g.steps; ++k)
      if (std::abs(m.step_phases[k] - phi) > 1e-15) throw ValidationError("oracle: only uniform phases have a ladder realization");
    s.ready_energy = -phi / g.dt;
  }
  return s;
}

// Analytic model with custom step operators matching an oracle whose kick
// depends on the outcome channel.
inline MeasurementModel effective_step_model(const OracleSpec& s) {
  validate_oracle_spec(s);
  MeasurementModel m;
  m.outcomes = s.outcomes;
  m.free_h = s.system_h;
  m.initial = s.initial;
  const std::size_t d = s.initial.dim();
  const Matrix u_s = propagator(s.system_h, s.grid.dt).matrix();
  for (std::size_t k = 1; k <= s.grid.steps; ++k) {
    Matrix c = Matrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    Matrix sn = c;
    double p = 0.0;
    std::vector<double> sines;
    for (std::size_t a = 0; a < s.outcomes.size(); ++a) {
      double theta = (s.channel_scale.empty() ? 1.0 : s.channel_scale[a]) * s.couplings[k - 1] * s.grid.dt;
      c += std::cos(theta) * s.outcomes.projector(a).matrix();
      sines.push_back(std::sin(theta));
      p += sines.back() * sines.back();
    }
    p /= static_cast<double>(s.outcomes.size());
    for (std::size_t a = 0; a < s.outcomes.size(); ++a)
      sn += (p > 0.0 ? sines[a] / std::sqrt(p) : 1.0) * s.outcomes.projector(a).matrix();
    m.step_probs.push_back(p);
    m.step_phases.push_back(-s.ready_energy * s.grid.dt);
    m.u_nodetect.emplace_back(p < 1.0 ? Matrix(c * u_s / std::sqrt(1.0 - p)) : u_s);
    m.u_detect.emplace_back(Matrix(sn * u_s));
  }
  return m;
}

struct OracleComparison {
  OracleExtraction extraction;
  CalibratedSchedule calibration;
  JointDistribution analytic;
  double max_joint_deviation = 0.0;     // over every (t_k, a) and the no-event weight
  double max_branch_deviation = 0.0;    // calibrated table against the extracted one
};

// Simulates, calibrates the schedule from the extracted table, and compares
// the analytic joint distribution entry by entry.
inline OracleComparison oracle_check(const OracleSpec& s) {
  OracleComparison out;
  TotalHamiltonian h = build_total_hamiltonian(s);
  out.extraction = simulate_and_extract(h);
  out.calibration = calibrate_rates(out.extraction.branches);
  MeasurementModel m;
  m.outcomes = s.outcomes;
  m.free_h = s.system_h;
  m.initial = s.initial;
  m.step_probs = out.calibration.step_probs;
  m.step_phases = out.calibration.step_phases;
  m.step_probs.resize(s.grid.steps, 1.0);
  m.step_phases.resize(s.grid.steps, 0.0);
  SingleEventSolution sol = solve_single_event(m, s.grid);
  out.analytic = joint_distribution(sol);
  for (const auto& e : out.analytic.entries)
    out.max_joint_deviation = std::max(out.max_joint_deviation, std::abs(e.probability - out.extraction.joint[e.time_index][e.outcome]));
  out.max_joint_deviation = std::max(out.max_joint_deviation, std::abs(out.analytic.no_event_weight - out.extraction.no_event_weight));
  for (std::size_t k = 0; k <= s.grid.steps; ++k) {
    out.max_branch_deviation = std::max(out.max_branch_deviation, std::abs(sol.branches.gamma[k] - out.extraction.branches.gamma[k]));
    out.max_branch_deviation = std::max(out.max_branch_deviation, std::abs(sol.branches.chi[k] - out.extraction.branches.chi[k]));
  }
  return out;
}

// A cyclic clock of `dim` readings spaced by `spacing`.
struct CyclicClock {
  std::size_t dim = 0;
  double spacing = 1.0;
  OperatorMatrix generator;

  static CyclicClock build(std::size_t dim, double spacing) { return {dim, spacing, cyclic_shift_generator(dim, spacing)}; }
};

struct WdwResidual {
  std::size_t clock_dim = 0;
  double residual = 0.0;
};

// || (H_C (x) 1 + 1 (x) H_R) |Psi> || for
// |Psi> = D^{-1/2} sum_j |beta_j> exp(-i H_R j spacing)|psi0>.
inline WdwResidual wdw_residual(const OperatorMatrix& h_r, const StateVector& psi0, std::size_t clock_dim, double spacing) {
  if (h_r.rows() != psi0.dim()) throw ValidationError("wdw: state and Hamiltonian dimensions differ");
  check_state_dim(checked_product(clock_dim, psi0.dim()), "wdw state");
  CyclicClock clock = CyclicClock::build(clock_dim, spacing);
  HermitianSpectrum spectrum(h_r);
  const auto dc = static_cast<Eigen::Index>(clock_dim);
  const auto dr = static_cast<Eigen::Index>(psi0.dim());
  Matrix psi(dc, dr);  // row j: clock reading j
  for (Eigen::Index j = 0; j < dc; ++j)
    psi.row(j) = spectrum.evolve(psi0.amplitudes(), static_cast<double>(j) * spacing).transpose() / std::sqrt(static_cast<double>(dc));
  Matrix r = clock.generator.matrix() * psi + psi * h_r.matrix().transpose();
  return {clock_dim, r.norm()};
}

inline WdwResidual wdw_residual(const TotalHamiltonian& h, std::size_t clock_dim) {
  if (clock_dim < h.spec.grid.steps + 1) throw ValidationError("wdw: clock must have at least N + 1 readings");
  return wdw_residual(h.dense(), h.initial_state(), clock_dim, h.spec.grid.dt);
}

}  // namespace eventium
