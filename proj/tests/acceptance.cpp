// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <string>

#include "eventium/environment.hpp"
#include "eventium/global_state.hpp"
#include "eventium/oracle.hpp"
#include "eventium/report.hpp"

using namespace eventium;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

Matrix sx() {
  Matrix m(2, 2);
  m << 0.0, 1.0, 1.0, 0.0;
  return m;
}

ProjectiveMeasurement z_outcomes() {
  return ProjectiveMeasurement::from_vectors({"up", "down"}, {StateVector::basis(2, 0), StateVector::basis(2, 1)});
}

StateVector random_qubit(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Vector v(2);
  v << Complex(g(rng), g(rng)), Complex(g(rng), g(rng));
  return StateVector(v / v.norm());
}

OperatorMatrix random_h(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Matrix m(2, 2);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) m(i, j) = Complex(g(rng), g(rng));
  return OperatorMatrix(((m + m.adjoint()) * 0.5).eval());
}

MeasurementModel qubit(const StateVector& psi, const OperatorMatrix& h, std::vector<double> probs) {
  MeasurementModel m;
  m.outcomes = z_outcomes();
  m.free_h = h;
  m.initial = psi;
  m.step_probs = std::move(probs);
  return m;
}

std::string sci(double v) { return fmt::format("{:.2e}", v); }

Outcome completeness() {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0), ph(-3.0, 3.0);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> p(50), phi(50);
    for (auto& x : p) x = u(rng);
    for (auto& x : phi) x = ph(rng);
    worst = std::max(worst, std::abs(branch_table_from(p, phi, 50).completeness() - 1.0));
  }
  return {worst < 1e-12, "max |sum - 1| = " + sci(worst)};
}

Outcome geometric() {
  double worst = 0.0;
  for (double p : {0.05, 0.1, 0.5}) {
    auto t = branch_table_from(std::vector<double>(100, p), {}, 100);
    for (std::size_t k = 1; k <= 100; ++k) worst = std::max(worst, std::abs(std::norm(t.chi[k]) - p * std::pow(1 - p, k - 1)));
  }
  return {worst < 1e-12, "max deviation " + sci(worst)};
}

Outcome ideal_limit() {
  std::mt19937_64 rng(3);
  double worst = 0.0;
  ClockGrid g{0.0, 1e-4, 10};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> probs(10, 0.5);
    probs[0] = 1.0 - 1e-6;
    MeasurementModel m = qubit(random_qubit(rng), random_h(rng), probs);
    auto marg = outcome_marginal(m, g);
    for (std::size_t a = 0; a < 2; ++a) worst = std::max(worst, std::abs(marg.probabilities[a] - std::norm(m.initial[a])));
  }
  return {worst < 1e-3, "max |P(a) - |psi(a|t0)|^2| = " + sci(worst)};
}

Outcome single_oracle() {
  OracleSpec s;
  s.system_h = OperatorMatrix((0.9 * sx()).eval());
  s.outcomes = z_outcomes();
  Vector v(2);
  v << 0.6, Complex(0.0, 0.8);
  s.initial = StateVector(v);
  s.grid = {0.0, 0.05, 64};
  s.couplings.assign(64, 6.0);
  s.ready_energy = 0.5;
  auto r = oracle_check(s);
  return {build_total_hamiltonian(s).dim() == 390 && r.max_joint_deviation < 1e-8,
          "dim 390, max entry deviation " + sci(r.max_joint_deviation)};
}

Outcome two_event_oracle() {
  OracleSpec s;
  s.system_h = OperatorMatrix((0.7 * sx()).eval());
  s.outcomes = z_outcomes();
  Vector v(2);
  v << 0.8, 0.6;
  s.initial = StateVector(v);
  s.grid = {0.0, 0.1, 16};
  s.couplings.assign(16, 3.5);
  s.detectors = 2;
  auto run = simulate_event_chain(build_total_hamiltonian(s));
  ChainModel c;
  c.base = qubit(s.initial, s.system_h, std::vector<double>(16, kick_probability(3.5, 0.1)));
  c.max_events = 2;
  ChainEvaluator ev(c, s.grid);
  double worst = 0.0;
  std::size_t pairs = 0;
  for (const auto& [h, p] : run.probabilities) {
    worst = std::max(worst, std::abs(std::norm(ev.amplitude(h)) - p));
    pairs += h.size() == 2 && h.fully_realized();
  }
  return {worst < 1e-7 && pairs > 0, fmt::format("{} two-event entries, max deviation {}", pairs, sci(worst))};
}

Outcome level_normalization() {
  ChainModel c;
  c.base = qubit(StateVector(Vector::Constant(2, 1.0 / std::sqrt(2.0))), OperatorMatrix((0.8 * sx()).eval()), std::vector<double>(40, 0.6));
  c.max_events = 3;
  ClockGrid g{0.0, 0.1, 40};
  auto t = enumerate_histories(c, g);
  auto norms = event_level_norms(t, 3);
  auto tails = event_level_tails(t, 3, 40);
  double worst_tail = 0.0, worst = 0.0;
  for (std::size_t e = 0; e < 3; ++e) {
    double below = 0.0;  // weight that never reached event e + 1
    for (std::size_t f = 0; f <= e; ++f) below += tails[f];
    worst_tail = std::max(worst_tail, std::sqrt(below));
    worst = std::max(worst, std::abs(norms[e] - 1.0));
  }
  return {worst_tail < 1e-6 && worst < 1e-9,
          fmt::format("{} histories, max |Gamma tail| {}, max |level - 1| {}", t.size(), sci(worst_tail), sci(worst))};
}

Outcome single_event_conditional() {
  std::mt19937_64 rng(7);
  ChainModel c;
  c.base = qubit(random_qubit(rng), random_h(rng), std::vector<double>(20, 0.3));
  ClockGrid g{0.0, 0.1, 20};
  ChainEvaluator ev(c, g);
  std::size_t checked = 0, bad = 0;
  for (std::uint32_t k = 1; k < 20; ++k)
    for (std::uint32_t a = 1; a <= 2; ++a) {
      Complex first = ev.amplitude(EventHistory{{k, a}});
      if (first == Complex{0.0}) continue;
      for (auto l = k + 1; l <= 20; ++l) {
        ++checked;
        bad += std::norm(ev.amplitude(EventHistory{{k, a}, {l, 0}})) / std::norm(first) != 1.0;
      }
    }
  return {bad == 0 && checked > 0, fmt::format("{} conditionals, {} not exactly 1", checked, bad)};
}

Outcome conditioning() {
  std::mt19937_64 rng(8);
  ChainModel c;
  c.base = qubit(random_qubit(rng), random_h(rng), std::vector<double>(32, 0.15));
  c.base.step_phases.assign(32, 0.2);
  ClockGrid g{0.0, 0.1, 32};
  auto state = assemble_global_state(c, g);
  double worst = 0.0;
  for (std::size_t beta = 0; beta <= 32; ++beta)
    worst = std::max(worst, max_branch_deviation(condition_on_clock(state, beta), conditioned_state(c.base, g, beta)));
  return {worst < 1e-12, "max branch deviation " + sci(worst)};
}

Outcome environment_round_trip() {
  const std::uint32_t n = 64;
  std::set<std::string> seen;
  bool ok = true;
  for (std::uint32_t k = 1; k <= n; ++k)
    for (std::uint32_t code = 1; code <= 2; ++code) {
      auto arr = encode_arrangement(k, code, n);
      ok = ok && decode_arrangement(arr) == EventRecord{k, code};
      seen.insert(to_string(arr));
    }
  auto none = encode_no_event(n);
  ok = ok && decode_arrangement(none) == EventRecord{n, kNoEvent};
  seen.insert(to_string(none));
  return {ok && seen.size() == 129, fmt::format("{} distinct arrangements", seen.size())};
}

Outcome decoherence_grouping() {
  auto c = load_scenario(std::string(EVENTIUM_SCENARIO_DIR) + "/qubit_plusx.cfg");
  auto s = solve_single_event(c.model(), c.grid);
  auto marg = outcome_marginal(joint_distribution(s));
  auto p = decohere_pointer(s, c.horizon);
  double worst = 0.0;
  for (std::size_t a = 0; a < 2; ++a) worst = std::max(worst, std::abs(p.groups[a].weight - marg.probabilities[a]));
  return {worst < 1e-10, "max |weight - P(a)| = " + sci(worst)};
}

Outcome wdw_convergence() {
  Matrix h(3, 3);
  h << 0.3, Complex(0.2, -0.1), 0.0, Complex(0.2, 0.1), -0.5, 0.4, 0.0, 0.4, 1.1;
  StateVector psi0 = StateVector::basis(3, 0);
  double r16 = wdw_residual(OperatorMatrix(h), psi0, 16, 0.3).residual;
  double r32 = wdw_residual(OperatorMatrix(h), psi0, 32, 0.3).residual;
  double r64 = wdw_residual(OperatorMatrix(h), psi0, 64, 0.3).residual;
  return {r32 < r16 && r64 < r32, fmt::format("residuals {} / {} / {}", sci(r16), sci(r32), sci(r64))};
}

Outcome memory_monotonicity() {
  std::mt19937_64 rng(12);
  std::size_t tables = 0;
  bool ok = true;
  for (std::size_t events = 1; events <= 3; ++events)
    for (int trial = 0; trial < 4; ++trial) {
      ChainModel c;
      std::uniform_real_distribution<double> u(0.0, 1.0);
      std::vector<double> probs(10);
      for (auto& p : probs) p = u(rng) < 0.3 ? 0.0 : u(rng);
      c.base = qubit(trial % 2 ? StateVector::basis(2, 0) : random_qubit(rng), trial % 2 ? OperatorMatrix::zero(2, 2) : random_h(rng), probs);
      c.max_events = events;
      c.dead_time_steps = static_cast<std::size_t>(trial % 3);
      ok = ok && support_is_prefix_closed(enumerate_histories(c, {0.0, 0.2, 10}));
      ++tables;
    }
  return {ok, fmt::format("{} tables", tables)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"algebraic completeness", completeness},
      {"geometric law", geometric},
      {"ideal-measurement limit", ideal_limit},
      {"single-event oracle equivalence", single_oracle},
      {"two-event oracle equivalence", two_event_oracle},
      {"per-event chain normalization", level_normalization},
      {"single-event conditional", single_event_conditional},
      {"conditioning consistency", conditioning},
      {"environment round-trip", environment_round_trip},
      {"decoherence grouping", decoherence_grouping},
      {"constraint residual convergence", wdw_convergence},
      {"memory monotonicity", memory_monotonicity},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !o.pass;
    std::printf("[%s] %2zu %s: %s (%.3f s)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str(), secs);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
