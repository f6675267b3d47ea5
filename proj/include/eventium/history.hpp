// Event records and histories. An outcome code of 0 means "no event (yet)";
// code a > 0 refers to outcome index a - 1.
#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "eventium/errors.hpp"

namespace eventium {

inline constexpr std::uint32_t kNoEvent = 0;

inline std::uint32_t outcome_code(std::size_t outcome_index) { return static_cast<std::uint32_t>(outcome_index + 1); }
inline std::size_t outcome_index(std::uint32_t code) { return static_cast<std::size_t>(code) - 1; }

struct EventRecord {
  std::uint32_t time_index = 0;
  std::uint32_t outcome = kNoEvent;
  std::uint32_t system = 0;

  bool is_event() const noexcept { return outcome != kNoEvent; }
  auto operator<=>(const EventRecord&) const = default;
};

class EventHistory {
 public:
  EventHistory() = default;
  EventHistory(std::initializer_list<EventRecord> records) : records_(records) {}
  explicit EventHistory(std::vector<EventRecord> records) : records_(std::move(records)) {}

  const std::vector<EventRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  const EventRecord& operator[](std::size_t i) const { return records_[i]; }
  const EventRecord& back() const { return records_.back(); }
  auto begin() const noexcept { return records_.begin(); }
  auto end() const noexcept { return records_.end(); }

  EventHistory prefix(std::size_t n) const {
    if (n > records_.size()) throw ValidationError("EventHistory::prefix: too long");
    return EventHistory(std::vector<EventRecord>(records_.begin(), records_.begin() + static_cast<std::ptrdiff_t>(n)));
  }

  EventHistory extended(EventRecord r) const {
    EventHistory out = *this;
    out.records_.push_back(r);
    return out;
  }

  void push_back(EventRecord r) { records_.push_back(r); }

  // Per system: time indices strictly increase.
  bool is_causal() const noexcept {
    for (std::size_t i = 1; i < records_.size(); ++i)
      if (records_[i].system == records_[i - 1].system && records_[i].time_index <= records_[i - 1].time_index) return false;
    return true;
  }

  // Per system: a no-event record can only close that system's history.
  bool is_well_formed() const noexcept {
    for (std::size_t i = 0; i + 1 < records_.size(); ++i)
      if (!records_[i].is_event() && records_[i + 1].system == records_[i].system) return false;
    return true;
  }

  bool fully_realized() const noexcept {
    for (const auto& r : records_)
      if (!r.is_event()) return false;
    return true;
  }

  auto operator<=>(const EventHistory&) const = default;
  bool operator==(const EventHistory&) const = default;

 private:
  std::vector<EventRecord> records_;
};

inline std::string to_string(const EventHistory& h, const std::vector<std::string>& labels = {}) {
  std::string out = "(";
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (i) out += "; ";
    const auto& r = h[i];
    if (r.system) out += "s" + std::to_string(r.system) + ":";
    out += "t" + std::to_string(r.time_index) + ",";
    if (!r.is_event())
      out += "0";
    else if (outcome_index(r.outcome) < labels.size())
      out += labels[outcome_index(r.outcome)];
    else
      out += "#" + std::to_string(r.outcome);
  }
  return out + ")";
}

}  // namespace eventium
