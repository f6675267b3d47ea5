// Record registers as arrangements of environment cells, their decoding, and
// the grouping of a finished detection into outcome pointer states.
#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "eventium/detection.hpp"
#include "eventium/errors.hpp"
#include "eventium/history.hpp"

namespace eventium {

// Blank: the cell saw no detection. Outcome: it stores outcome code `outcome`.
// Ready: not yet reached; every cell past the explicit length is Ready.
enum class CellKind : std::uint8_t { Blank, Outcome, Ready };

struct Cell {
  CellKind kind = CellKind::Ready;
  std::uint32_t outcome = kNoEvent;

  static Cell blank() { return {CellKind::Blank, kNoEvent}; }
  static Cell ready() { return {CellKind::Ready, kNoEvent}; }
  static Cell record(std::uint32_t code) { return {CellKind::Outcome, code}; }
  auto operator<=>(const Cell&) const = default;
};

class MalformedArrangement : public ValidationError {
 public:
  MalformedArrangement(const std::string& what, std::size_t cell)
      : ValidationError(fmt::format("{} at cell {}", what, cell)), cell_(cell) {}
  // 1-based position of the first offending cell.
  std::size_t cell() const noexcept { return cell_; }

 private:
  std::size_t cell_;
};

// Cells 1..length() of one register; trailing Ready cells are implicit.
class EnvironmentArrangement {
 public:
  EnvironmentArrangement() = default;
  explicit EnvironmentArrangement(std::vector<Cell> cells) : cells_(std::move(cells)) {
    while (!cells_.empty() && cells_.back().kind == CellKind::Ready) cells_.pop_back();
  }

  std::size_t length() const noexcept { return cells_.size(); }
  Cell cell(std::size_t i) const { return (i >= 1 && i <= cells_.size()) ? cells_[i - 1] : Cell::ready(); }
  const std::vector<Cell>& cells() const noexcept { return cells_; }

  auto operator<=>(const EnvironmentArrangement&) const = default;
  bool operator==(const EnvironmentArrangement&) const = default;

 private:
  std::vector<Cell> cells_;
};

inline std::string to_string(const EnvironmentArrangement& a, const std::vector<std::string>& labels = {}) {
  std::string out = "|";
  for (std::size_t i = 1; i <= a.length(); ++i) {
    Cell c = a.cell(i);
    if (i > 1) out += ",";
    if (c.kind == CellKind::Blank)
      out += "0";
    else if (c.kind == CellKind::Ready)
      out += "r";
    else if (outcome_index(c.outcome) < labels.size())
      out += labels[outcome_index(c.outcome)];
    else
      out += "#" + std::to_string(c.outcome);
  }
  return out + (a.length() ? ",r...>" : "r...>");
}

// Detection of outcome code `outcome` at step k over a horizon of n steps:
// k - 1 blanks, then the record copied into cells k..n.
inline EnvironmentArrangement encode_arrangement(std::size_t k, std::uint32_t outcome, std::size_t n) {
  if (outcome == kNoEvent) throw ValidationError("encode_arrangement: use encode_no_event for absent events");
  if (k < 1 || k > n) throw ValidationError("encode_arrangement: need 1 <= k <= n");
  std::vector<Cell> cells(n, Cell::blank());
  for (std::size_t i = k; i <= n; ++i) cells[i - 1] = Cell::record(outcome);
  return EnvironmentArrangement(std::move(cells));
}

inline EnvironmentArrangement encode_no_event(std::size_t n) {
  return EnvironmentArrangement(std::vector<Cell>(n, Cell::blank()));
}

// Returns (k, outcome) or (n, no event).
inline EventRecord decode_arrangement(const EnvironmentArrangement& a) {
  const std::size_t n = a.length();
  std::size_t i = 1;
  while (i <= n && a.cell(i).kind == CellKind::Blank) ++i;
  if (i > n) return {static_cast<std::uint32_t>(n), kNoEvent};
  Cell first = a.cell(i);
  if (first.kind != CellKind::Outcome || first.outcome == kNoEvent) throw MalformedArrangement("unexpected ready cell", i);
  for (std::size_t j = i + 1; j <= n; ++j)
    if (a.cell(j) != first) throw MalformedArrangement("record not copied forward", j);
  return {static_cast<std::uint32_t>(i), first.outcome};
}

// One register per record of a single-system history, all over horizon n.
inline std::vector<EnvironmentArrangement> encode_history(const EventHistory& h, std::size_t n) {
  if (h.empty()) throw ValidationError("encode_history: empty history");
  if (!h.is_causal() || !h.is_well_formed()) throw ValidationError("encode_history: history is not causal and well formed");
  std::vector<EnvironmentArrangement> out;
  for (const auto& r : h) {
    if (r.system != 0) throw ValidationError("encode_history: single-system histories only");
    if (r.time_index > n) throw ValidationError("encode_history: record beyond the horizon");
    if (r.is_event())
      out.push_back(encode_arrangement(r.time_index, r.outcome, n));
    else {
      if (r.time_index != n) throw ValidationError("encode_history: a closing no-event record must sit at the horizon");
      out.push_back(encode_no_event(n));
    }
  }
  return out;
}

inline EventHistory decode_history(const std::vector<EnvironmentArrangement>& registers) {
  EventHistory h;
  for (std::size_t e = 0; e < registers.size(); ++e) {
    EventRecord r = decode_arrangement(registers[e]);
    if (!h.empty()) {
      if (!h.back().is_event()) throw MalformedArrangement(fmt::format("register {} follows an empty register", e + 1), 1);
      if (r.is_event() && r.time_index <= h.back().time_index)
        throw MalformedArrangement(fmt::format("register {} fired before register {}", e + 1, e), r.time_index);
    }
    h.push_back(r);
  }
  return h;
}

struct PointerTerm {
  std::size_t time_index = 0;
  Complex coefficient;  // psi_S(a|t_k) chi_k
  EnvironmentArrangement arrangement;
};

// The environment state correlated with outcome a after the detection.
struct PointerGroup {
  std::size_t outcome = 0;
  std::vector<PointerTerm> terms;
  double weight = 0.0;           // squared norm = P(a)
  Complex pointer_amplitude;     // overlap with the normalized sum_k chi_k |t_k, a>
  double coherence = 0.0;        // |pointer_amplitude|^2 / weight
};

struct PointerDecomposition {
  std::vector<PointerGroup> groups;
  double no_event_weight = 0.0;
  std::size_t horizon = 0;
};

inline PointerDecomposition decohere_pointer(const SingleEventSolution& s, std::size_t horizon) {
  const std::size_t n = s.grid.steps;
  if (horizon < n) throw ValidationError("decohere_pointer: horizon shorter than the grid");
  PointerDecomposition out;
  out.horizon = horizon;
  out.no_event_weight = s.no_event_weight();
  double chi_norm = 0.0;
  for (std::size_t k = 1; k <= n; ++k) chi_norm += std::norm(s.branches.chi[k]);
  chi_norm = std::sqrt(chi_norm);
  for (std::size_t a = 0; a < s.outcomes(); ++a) {
    PointerGroup g;
    g.outcome = a;
    for (std::size_t k = 1; k <= n; ++k) {
      Complex c = s.event_amplitude(k, a);
      g.weight += std::norm(c);
      if (chi_norm > 0.0) g.pointer_amplitude += std::conj(s.branches.chi[k]) * c / chi_norm;
      g.terms.push_back({k, c, encode_arrangement(k, outcome_code(a), horizon)});
    }
    g.coherence = g.weight > 0.0 ? std::norm(g.pointer_amplitude) / g.weight : 0.0;
    out.groups.push_back(std::move(g));
  }
  return out;
}

}  // namespace eventium
