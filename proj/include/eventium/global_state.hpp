// The timeless state: every nonzero history amplitude over the whole clock
// range, with sector splitting, clock conditioning, products of independent
// systems and a plain-text form.
#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdlib>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "eventium/chains.hpp"
#include "eventium/detection.hpp"
#include "eventium/errors.hpp"
#include "eventium/history.hpp"

namespace eventium {

struct SystemInfo {
  std::string label;
  ClockGrid grid;
  std::size_t max_events = 1;
  std::vector<std::string> outcomes;
};

class GlobalEventState {
 public:
  GlobalEventState() = default;
  GlobalEventState(std::vector<SystemInfo> systems, HistoryTable table, std::shared_ptr<const ChainEvaluator> evaluator = {})
      : systems_(std::move(systems)), table_(std::move(table)), evaluator_(std::move(evaluator)) {
    if (systems_.empty()) throw ValidationError("global state needs at least one system");
    for (std::size_t i = 0; i < systems_.size(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (systems_[i].label == systems_[j].label) throw ValidationError("system label '" + systems_[i].label + "' appears twice");
  }

  const std::vector<SystemInfo>& systems() const noexcept { return systems_; }
  const HistoryTable& table() const noexcept { return table_; }
  const ClockGrid& grid() const { return systems_.front().grid; }
  std::size_t max_events() const { return systems_.front().max_events; }
  const ChainEvaluator* evaluator() const noexcept { return evaluator_.get(); }
  std::size_t size() const noexcept { return table_.size(); }

  // Exact zero for absent keys.
  Complex amplitude(const EventHistory& h) const { return table_.amplitude(h); }

  // Clock readings t_1..t_N carried by the table; each contributes unit weight.
  std::size_t clock_readings() const {
    std::size_t r = 1;
    for (const auto& s : systems_) r *= s.grid.steps;
    return r;
  }

  // Sum of |amplitude|^2 divided by the number of clock readings.
  double normalized_weight() const {
    auto r = clock_readings();
    return r ? table_.total_weight() / static_cast<double>(r) : 0.0;
  }

 private:
  std::vector<SystemInfo> systems_;
  HistoryTable table_;
  std::shared_ptr<const ChainEvaluator> evaluator_;
};

inline SystemInfo system_info(const ChainModel& m, const ClockGrid& g, std::string label = "S") {
  return {std::move(label), g, m.max_events, m.base.outcomes.labels()};
}

inline GlobalEventState assemble_global_state(const ChainModel& m, const ClockGrid& g, std::size_t budget = kDefaultHistoryBudget) {
  auto ev = std::make_shared<const ChainEvaluator>(m, g);
  HistoryTable t = enumerate_histories(*ev, budget);
  return GlobalEventState({system_info(m, g)}, std::move(t), std::move(ev));
}

inline Complex history_amplitude(const GlobalEventState& g, const EventHistory& h) { return g.amplitude(h); }

struct SectorSplit {
  GlobalEventState event;     // histories closing with an event
  GlobalEventState no_event;  // histories closing with a no-event record
  double event_weight = 0.0;  // normalized per clock reading
  double no_event_weight = 0.0;
};

inline SectorSplit split_event_no_event(const GlobalEventState& g) {
  std::vector<HistoryTable::Entry> ev, none;
  for (const auto& e : g.table()) (e.first.back().is_event() ? ev : none).push_back(e);
  SectorSplit s;
  auto readings = static_cast<double>(std::max<std::size_t>(1, g.clock_readings()));
  s.event = GlobalEventState(g.systems(), HistoryTable(std::move(ev), true));
  s.no_event = GlobalEventState(g.systems(), HistoryTable(std::move(none), true));
  s.event_weight = s.event.table().total_weight() / readings;
  s.no_event_weight = s.no_event.table().total_weight() / readings;
  return s;
}

// Branches whose last record is at clock index beta, with system states
// rebuilt from the model. beta = 0 gives the initial product state.
inline ConditionedState condition_on_clock(const GlobalEventState& g, std::size_t beta) {
  const ChainEvaluator* ev = g.evaluator();
  if (!ev || g.systems().size() != 1) throw ValidationError("condition_on_clock: needs a single-system state built from a model");
  if (beta > g.grid().steps) throw ValidationError("condition_on_clock: clock index beyond the grid");
  ConditionedState out;
  out.beta = beta;
  if (beta == 0) {
    EventHistory h{{0, kNoEvent}};
    out.branches.push_back({h, Complex{1.0}, ev->model().base.initial});
    return out;
  }
  for (const auto& [h, amp] : g.table())
    if (h.back().time_index == beta) out.branches.push_back({h, amp, ev->final_system_state(h)});
  return out;
}

// Largest amplitude or state deviation between two conditioned states, with
// missing branches counted as zero.
inline double max_branch_deviation(const ConditionedState& a, const ConditionedState& b) {
  double worst = 0.0;
  auto one_way = [&worst](const ConditionedState& x, const ConditionedState& y) {
    for (const auto& bx : x.branches) {
      const ConditionedBranch* by = y.find(bx.history);
      if (!by) {
        worst = std::max(worst, std::abs(bx.amplitude) * bx.system.norm());
        continue;
      }
      worst = std::max(worst, std::abs(bx.amplitude - by->amplitude));
      worst = std::max(worst, (bx.system.amplitudes() - by->system.amplitudes()).cwiseAbs().maxCoeff());
    }
  };
  one_way(a, b);
  one_way(b, a);
  return worst;
}

// Independent systems: keys concatenate with offset system indices and
// amplitudes multiply.
inline GlobalEventState product_compose(const std::vector<GlobalEventState>& parts, std::size_t budget = kDefaultHistoryBudget) {
  if (parts.empty()) throw ValidationError("product_compose: no parts");
  std::vector<SystemInfo> systems;
  double count = 1.0;
  for (const auto& p : parts) {
    for (const auto& s : p.systems()) {
      for (const auto& q : systems)
        if (q.label == s.label) throw ValidationError("product_compose: system '" + s.label + "' shared between parts");
      systems.push_back(s);
    }
    count *= static_cast<double>(p.size());
  }
  if (count > static_cast<double>(budget))
    throw BudgetError("product_compose: table too large", static_cast<std::size_t>(std::min(count, 1.8e19)), budget);

  std::vector<HistoryTable::Entry> acc{{EventHistory{}, Complex{1.0}}};
  std::uint32_t offset = 0;
  for (const auto& p : parts) {
    std::vector<HistoryTable::Entry> next;
    next.reserve(acc.size() * p.size());
    for (const auto& [ha, aa] : acc)
      for (const auto& [hb, ab] : p.table()) {
        std::vector<EventRecord> recs = ha.records();
        for (auto r : hb) {
          r.system += offset;
          recs.push_back(r);
        }
        next.emplace_back(EventHistory(std::move(recs)), aa * ab);
      }
    acc = std::move(next);
    offset += static_cast<std::uint32_t>(p.systems().size());
  }
  return GlobalEventState(std::move(systems), HistoryTable(std::move(acc)));
}

namespace detail {

inline std::string fmt17(double v) { return fmt::format("{:.17g}", v); }

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, const std::string& what) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') throw ValidationError("cannot parse number '" + s + "' in " + what);
  return v;
}

inline std::uint64_t parse_uint(const std::string& s, const std::string& what) {
  char* end = nullptr;
  unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0' || s.front() == '-') throw ValidationError("cannot parse index '" + s + "' in " + what);
  return v;
}

}  // namespace detail

// Header lines start with '#'. Each record line holds tab-separated history
// cells "system:time_index:outcome_code", then re and im of the amplitude.
inline std::string serialize(const GlobalEventState& g) {
  std::string out = "# eventium global state 1\n";
  for (std::size_t i = 0; i < g.systems().size(); ++i) {
    const auto& s = g.systems()[i];
    out += fmt::format("# system\t{}\t{}\t{}\t{}\t{}\t{}", i, s.label, detail::fmt17(s.grid.t0), detail::fmt17(s.grid.dt),
                       s.grid.steps, s.max_events);
    for (const auto& l : s.outcomes) out += "\t" + l;
    out += "\n";
  }
  for (const auto& [h, a] : g.table()) {
    for (const auto& r : h) out += fmt::format("{}:{}:{}\t", r.system, r.time_index, r.outcome);
    out += detail::fmt17(a.real()) + "\t" + detail::fmt17(a.imag()) + "\n";
  }
  return out;
}

inline GlobalEventState parse_global_state(const std::string& text) {
  std::vector<SystemInfo> systems;
  std::vector<HistoryTable::Entry> entries;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = fmt::format("line {}", lineno);
    if (line.empty()) continue;
    auto cols = detail::split(line, '\t');
    if (line.front() == '#') {
      if (cols.size() >= 7 && cols[0] == "# system") {
        if (detail::parse_uint(cols[1], where) != systems.size()) throw ValidationError("system headers out of order at " + where);
        SystemInfo s;
        s.label = cols[2];
        s.grid.t0 = detail::parse_double(cols[3], where);
        s.grid.dt = detail::parse_double(cols[4], where);
        s.grid.steps = detail::parse_uint(cols[5], where);
        s.max_events = detail::parse_uint(cols[6], where);
        s.outcomes.assign(cols.begin() + 7, cols.end());
        systems.push_back(std::move(s));
      }
      continue;
    }
    if (cols.size() < 3) throw ValidationError("record needs cells and an amplitude at " + where);
    EventHistory h;
    for (std::size_t i = 0; i + 2 < cols.size(); ++i) {
      auto parts = detail::split(cols[i], ':');
      if (parts.size() != 3) throw ValidationError("bad history cell '" + cols[i] + "' at " + where);
      h.push_back({static_cast<std::uint32_t>(detail::parse_uint(parts[1], where)),
                   static_cast<std::uint32_t>(detail::parse_uint(parts[2], where)),
                   static_cast<std::uint32_t>(detail::parse_uint(parts[0], where))});
    }
    Complex a{detail::parse_double(cols[cols.size() - 2], where), detail::parse_double(cols.back(), where)};
    entries.emplace_back(std::move(h), a);
  }
  return GlobalEventState(std::move(systems), HistoryTable(std::move(entries)));
}

}  // namespace eventium
