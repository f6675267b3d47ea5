// Chains of successive events on one system: conditional branch factors,
// history amplitudes and the enumeration of all nonzero histories.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <future>
#include <thread>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "eventium/detection.hpp"
#include "eventium/errors.hpp"
#include "eventium/hilbert.hpp"
#include "eventium/history.hpp"

namespace eventium {

struct ChainModel {
  MeasurementModel base;
  std::size_t max_events = 1;
  // Steps after an event during which the next detector stays closed.
  std::size_t dead_time_steps = 0;
  // Schedules for events e >= 2 at [e - 2], indexed by the step count since
  // the window opened. Missing entries reuse the first-event schedule.
  std::vector<std::vector<double>> event_probs;
  std::vector<std::vector<double>> event_phases;
};

struct StepRate {
  double prob = 0.0;
  double phase = 0.0;
};

// delta p and phase for event `event` at step ell, given event - 1 at step k.
inline StepRate event_step_rate(const ChainModel& m, std::size_t event, std::size_t ell, std::size_t k) {
  if (event == 0) throw ValidationError("event numbering starts at 1");
  if (event == 1) return {m.base.step_probs.at(ell - 1), detail::step_phase(m.base, ell)};
  if (event > m.max_events || ell <= k + m.dead_time_steps) return {};
  std::size_t s = ell - k - m.dead_time_steps;
  const auto& probs = event - 2 < m.event_probs.size() ? m.event_probs[event - 2] : m.base.step_probs;
  const auto* phases = event - 2 < m.event_phases.size() ? &m.event_phases[event - 2]
                       : event - 2 < m.event_probs.size() ? nullptr
                                                          : &m.base.step_phases;
  if (s > probs.size()) throw ValidationError(fmt::format("schedule for event {} too short", event));
  double phase = (phases && s <= phases->size()) ? (*phases)[s - 1] : 0.0;
  return {probs[s - 1], phase};
}

inline std::vector<std::string> validate_chain_model(const ChainModel& m, const ClockGrid& g) {
  auto warnings = validate_model(m.base, g);
  if (m.max_events == 0) throw ValidationError("chain: max_events must be at least 1");
  const std::size_t need = g.steps > 0 ? g.steps - 1 : 0;
  for (std::size_t e = 0; e < m.event_probs.size(); ++e) {
    if (m.event_probs[e].size() < need) throw ValidationError(fmt::format("chain: schedule for event {} too short", e + 2));
    for (double p : m.event_probs[e])
      if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(fmt::format("chain: delta p for event {} outside [0, 1]", e + 2));
  }
  for (const auto& ph : m.event_phases)
    for (double v : ph)
      if (!std::isfinite(v)) throw ValidationError("chain: non-finite phase");
  return warnings;
}

// Gamma_e(t_ell, t_k) and chi_e(t_ell | t_k) for ell = 0..N (absolute index).
// Gamma is 1 and chi is 0 for ell <= k.
struct ConditionalBranchTable {
  std::size_t event = 2;
  std::size_t k_prev = 0;
  std::vector<Complex> gamma;
  std::vector<Complex> chi;
};

inline ConditionalBranchTable conditional_branch_amplitudes(const ChainModel& m, const ClockGrid& g, std::size_t k_prev,
                                                            std::size_t event = 2) {
  if (k_prev > g.steps) throw ValidationError("conditional branch: previous event beyond the grid");
  if (event == 0) throw ValidationError("event numbering starts at 1");
  ConditionalBranchTable t{event, k_prev, std::vector<Complex>(g.steps + 1, Complex{1.0}),
                           std::vector<Complex>(g.steps + 1, Complex{0.0})};
  for (std::size_t ell = k_prev + 1; ell <= g.steps; ++ell) {
    StepRate r = event_step_rate(m, event, ell, k_prev);
    t.chi[ell] = std::sqrt(r.prob) * t.gamma[ell - 1];
    t.gamma[ell] = t.gamma[ell - 1] * std::sqrt(1.0 - r.prob) * std::polar(1.0, r.phase);
  }
  return t;
}

// <a_next| U_S(t_next, t_prev) |a_prev> for rank-one outcomes.
inline Complex transition_amplitude(const ChainModel& m, const ClockGrid& g, std::size_t a_prev, std::size_t k_prev,
                                    std::size_t a_next, std::size_t k_next) {
  if (k_next <= k_prev) throw ValidationError("transition: time indices must increase");
  if (k_next > g.steps) throw ValidationError("transition: time index beyond the grid");
  const auto& out = m.base.outcomes;
  StateVector moved = propagator(m.base.free_h, static_cast<double>(k_next - k_prev) * g.dt) * out.pointer(a_prev);
  return out.pointer(a_next).inner(moved);
}

// Precomputes everything history amplitudes depend on; const methods are
// safe to call concurrently.
class ChainEvaluator {
 public:
  ChainEvaluator(ChainModel model, const ClockGrid& g)
      : model_(std::move(model)),
        grid_(g),
        warnings_(validate_chain_model(model_, g)),
        single_(solve_single_event(model_.base, g)),
        free_(model_.base.free_h, g.dt, g.steps) {
    conditional_.resize(model_.max_events);
    for (std::size_t e = 2; e <= model_.max_events + 1; ++e) {
      auto& row = conditional_[e - 2];
      row.reserve(g.steps + 1);
      for (std::size_t k = 0; k <= g.steps; ++k) row.push_back(conditional_branch_amplitudes(model_, g, k, e));
    }
  }

  const ChainModel& model() const noexcept { return model_; }
  const ClockGrid& grid() const noexcept { return grid_; }
  const SingleEventSolution& single_event() const noexcept { return single_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }
  const PropagatorTable& free_evolution() const noexcept { return free_; }
  std::size_t outcomes() const noexcept { return model_.base.outcomes.size(); }

  const ConditionalBranchTable& conditional(std::size_t event, std::size_t k_prev) const {
    if (event < 2 || event > model_.max_events + 1) throw ValidationError("conditional: event number out of range");
    return conditional_[event - 2].at(k_prev);
  }

  Complex amplitude(const EventHistory& h) const { return walk(h).first; }

  // System state after the last record, unnormalized for custom operators.
  StateVector final_system_state(const EventHistory& h) const { return walk(h).second; }

 private:
  void check(const EventHistory& h) const {
    if (h.empty()) throw ValidationError("history is empty");
    if (h.size() > model_.max_events + 1) throw ValidationError("history longer than max_events + 1");
    for (std::size_t i = 0; i < h.size(); ++i) {
      const auto& r = h[i];
      if (r.system != 0) throw ValidationError("single-system history has a foreign system index");
      if (r.time_index > grid_.steps) throw ValidationError("history time index beyond the grid");
      if (r.outcome > outcomes()) throw ValidationError("history outcome code out of range");
      if (!r.is_event() && i + 1 != h.size()) throw ValidationError("no-event record before the end of a history");
    }
  }

  std::pair<Complex, StateVector> walk(const EventHistory& h) const {
    check(h);
    const std::size_t d = model_.base.initial.dim();
    const auto zero = std::make_pair(Complex{0.0}, StateVector::null(d));
    const auto& first = h[0];
    Complex amp;
    StateVector state;
    if (!first.is_event()) return {single_.branches.gamma[first.time_index], single_.survivor[first.time_index]};
    if (first.time_index == 0) return zero;
    amp = single_.event_amplitude(first.time_index, outcome_index(first.outcome));
    if (amp == Complex{0.0}) return zero;
    state = single_.collapsed[first.time_index][outcome_index(first.outcome)];
    std::size_t k = first.time_index;
    for (std::size_t e = 2; e <= h.size(); ++e) {
      const auto& r = h[e - 1];
      if (r.time_index <= k) return zero;
      const auto& t = conditional(e, k);
      StateVector moved = free_.steps(r.time_index - k) * state;
      if (!r.is_event()) return {amp * t.gamma[r.time_index], std::move(moved)};
      auto res = model_.base.outcomes.apply(outcome_index(r.outcome), moved);
      amp *= res.amplitude * t.chi[r.time_index];
      if (amp == Complex{0.0}) return zero;
      state = std::move(res.collapsed);
      k = r.time_index;
    }
    return {amp, std::move(state)};
  }

  ChainModel model_;
  ClockGrid grid_;
  std::vector<std::string> warnings_;
  SingleEventSolution single_;
  PropagatorTable free_;
  std::vector<std::vector<ConditionalBranchTable>> conditional_;
};

inline Complex chain_amplitude(const ChainModel& m, const ClockGrid& g, const EventHistory& h) {
  return ChainEvaluator(m, g).amplitude(h);
}

// Sorted (history, amplitude) pairs with binary-search lookup.
class HistoryTable {
 public:
  using Entry = std::pair<EventHistory, Complex>;

  HistoryTable() = default;
  explicit HistoryTable(std::vector<Entry> entries, bool sorted = false) : entries_(std::move(entries)) {
    if (!sorted) std::sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) { return a.first < b.first; });
    for (std::size_t i = 1; i < entries_.size(); ++i)
      if (!(entries_[i - 1].first < entries_[i].first)) throw ValidationError("history table has duplicate or unsorted keys");
  }

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  const Entry* find(const EventHistory& h) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), h, [](const Entry& e, const EventHistory& k) { return e.first < k; });
    return (it != entries_.end() && it->first == h) ? &*it : nullptr;
  }
  bool contains(const EventHistory& h) const { return find(h) != nullptr; }
  Complex amplitude(const EventHistory& h) const {
    const Entry* e = find(h);
    return e ? e->second : Complex{0.0};
  }

  double total_weight() const {
    double s = 0.0;
    for (const auto& [h, a] : entries_) s += std::norm(a);
    return s;
  }

  bool operator==(const HistoryTable&) const = default;

 private:
  std::vector<Entry> entries_;
};

inline double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

// Upper bound on the number of keys enumerate_histories can produce.
inline double history_count_bound(std::size_t steps, std::size_t outcomes, std::size_t max_events) {
  double total = 0.0;
  for (std::size_t e = 1; e <= max_events; ++e) total += binomial(steps, e) * std::pow(static_cast<double>(outcomes), static_cast<double>(e));
  for (std::size_t e = 1; e <= max_events + 1; ++e)
    total += binomial(steps, e) * std::pow(static_cast<double>(outcomes), static_cast<double>(e - 1));
  return total;
}

inline constexpr std::size_t kDefaultHistoryBudget = 4'000'000;

namespace detail {

// Depth-first in ascending (time, outcome) order, which is the key order, so
// the output needs no sorting.
inline void grow_histories(const ChainEvaluator& ev, std::size_t event, std::size_t k_prev, const EventHistory& prefix,
                           Complex amp, const StateVector& state, std::vector<HistoryTable::Entry>& out) {
  const auto& g = ev.grid();
  const auto& t = ev.conditional(event, k_prev);
  const bool events_open = event <= ev.model().max_events;
  for (std::size_t ell = k_prev + 1; ell <= g.steps; ++ell) {
    const auto l32 = static_cast<std::uint32_t>(ell);
    Complex stay = amp * t.gamma[ell];
    if (stay != Complex{0.0}) out.emplace_back(prefix.extended({l32, kNoEvent}), stay);
    if (!events_open || t.chi[ell] == Complex{0.0}) continue;
    StateVector moved = ev.free_evolution().steps(ell - k_prev) * state;
    for (std::size_t a = 0; a < ev.outcomes(); ++a) {
      auto r = ev.model().base.outcomes.apply(a, moved);
      Complex next = amp * r.amplitude * t.chi[ell];
      if (next == Complex{0.0}) continue;
      EventHistory h = prefix.extended({l32, outcome_code(a)});
      out.emplace_back(h, next);
      grow_histories(ev, event + 1, ell, h, next, r.collapsed, out);
    }
  }
}

inline std::vector<HistoryTable::Entry> histories_from_first_event(const ChainEvaluator& ev, std::size_t k1) {
  std::vector<HistoryTable::Entry> out;
  const auto& s = ev.single_event();
  const auto k32 = static_cast<std::uint32_t>(k1);
  if (s.branches.gamma[k1] != Complex{0.0}) out.emplace_back(EventHistory{{k32, kNoEvent}}, s.branches.gamma[k1]);
  for (std::size_t a = 0; a < ev.outcomes(); ++a) {
    Complex amp = s.event_amplitude(k1, a);
    if (amp == Complex{0.0}) continue;
    EventHistory h{{k32, outcome_code(a)}};
    out.emplace_back(h, amp);
    grow_histories(ev, 2, k1, h, amp, s.collapsed[k1][a], out);
  }
  return out;
}

}  // namespace detail

// All nonzero-amplitude histories with time indices >= 1 and up to
// max_events events plus a closing no-event record. The trivial record
// (t_0, no event) with amplitude 1 is implicit.
inline HistoryTable enumerate_histories(const ChainEvaluator& ev, std::size_t budget = kDefaultHistoryBudget) {
  const auto& g = ev.grid();
  double bound = history_count_bound(g.steps, ev.outcomes(), ev.model().max_events);
  if (bound > static_cast<double>(budget))
    throw BudgetError(fmt::format("history enumeration: about {:.0f} histories", bound),
                      bound >= 1.8e19 ? static_cast<std::size_t>(-1) : static_cast<std::size_t>(bound), budget);

  const std::size_t n = g.steps;
  std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(), n));
  std::vector<std::future<std::vector<HistoryTable::Entry>>> jobs;
  for (std::size_t w = 0; w < workers; ++w) {
    // Contiguous ranges of k1 keep the concatenated output sorted.
    std::size_t lo = 1 + w * n / workers;
    std::size_t hi = 1 + (w + 1) * n / workers;
    jobs.push_back(std::async(std::launch::async, [&ev, lo, hi] {
      std::vector<HistoryTable::Entry> part;
      for (std::size_t k1 = lo; k1 < hi; ++k1) {
        auto chunk = detail::histories_from_first_event(ev, k1);
        std::move(chunk.begin(), chunk.end(), std::back_inserter(part));
      }
      return part;
    }));
  }
  std::vector<HistoryTable::Entry> all;
  for (auto& j : jobs) {
    auto part = j.get();
    std::move(part.begin(), part.end(), std::back_inserter(all));
  }
  return HistoryTable(std::move(all), true);
}

inline HistoryTable enumerate_histories(const ChainModel& m, const ClockGrid& g, std::size_t budget = kDefaultHistoryBudget) {
  return enumerate_histories(ChainEvaluator(m, g), budget);
}

// Total weight of fully realized histories with exactly e events, e = 1..max_events.
inline std::vector<double> event_level_norms(const HistoryTable& t, std::size_t max_events) {
  std::vector<double> out(max_events, 0.0);
  for (const auto& [h, a] : t)
    if (h.fully_realized() && h.size() <= max_events) out[h.size() - 1] += std::norm(a);
  return out;
}

// Weight of "exactly e - 1 events by t_N", e = 1..max_events: keys of length e
// closing with (t_N, 0), plus e - 1 events whose last one sits at t_N itself.
inline std::vector<double> event_level_tails(const HistoryTable& t, std::size_t max_events, std::size_t steps) {
  std::vector<double> out(max_events, 0.0);
  for (const auto& [h, a] : t) {
    if (h.back().time_index != steps) continue;
    if (!h.back().is_event() && h.size() <= max_events) out[h.size() - 1] += std::norm(a);
    if (h.back().is_event() && h.size() < max_events) out[h.size()] += std::norm(a);
  }
  return out;
}

// Every stored history's proper prefixes are stored too.
inline bool support_is_prefix_closed(const HistoryTable& t) {
  for (const auto& [h, a] : t)
    if (h.size() > 1 && !t.contains(h.prefix(h.size() - 1))) return false;
  return true;
}

}  // namespace eventium
