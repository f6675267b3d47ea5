// Error types and the dense-dimension budget shared by every module.
#pragma once

#include <cstddef>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <string>

namespace eventium {

// Bad input: non-hermitian generators, malformed histories, bad schedules...
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A dense object would exceed the configured size budget.
class BudgetError : public std::length_error {
 public:
  BudgetError(const std::string& what, std::size_t requested, std::size_t limit)
      : std::length_error(what + " (requested " + std::to_string(requested) +
                          ", limit " + std::to_string(limit) + ")"),
        requested_(requested),
        limit_(limit) {}

  std::size_t requested() const noexcept { return requested_; }
  std::size_t limit() const noexcept { return limit_; }

 private:
  std::size_t requested_;
  std::size_t limit_;
};

// Numerical failure inside the microscopic simulation.
class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kDefaultMaxDenseDim = 4096;

// State vectors are never squared into a matrix, so they get a larger allowance.
inline constexpr std::size_t kStateDimFactor = 1024;

// EVENTIUM_MAX_DIM overrides the default; unparsable or zero values are ignored.
inline std::size_t max_dense_dim() {
  if (const char* env = std::getenv("EVENTIUM_MAX_DIM")) {
    char* end = nullptr;
    unsigned long long v = std::strtoull(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return kDefaultMaxDenseDim;
}

inline std::size_t max_state_dim() { return max_dense_dim() * kStateDimFactor; }

inline void check_operator_dim(std::size_t dim, const std::string& what) {
  if (dim > max_dense_dim()) throw BudgetError(what + ": dense operator too large", dim, max_dense_dim());
}

inline void check_state_dim(std::size_t dim, const std::string& what) {
  if (dim > max_state_dim()) throw BudgetError(what + ": state vector too large", dim, max_state_dim());
}

// Product of dimensions; saturates instead of wrapping so budget checks still trip.
inline std::size_t checked_product(std::size_t a, std::size_t b) {
  if (a != 0 && b > std::numeric_limits<std::size_t>::max() / a) return std::numeric_limits<std::size_t>::max();
  return a * b;
}

}  // namespace eventium
