#include <gtest/gtest.h>

#include <cmath>

#include "eventium/environment.hpp"
#include "test_support.hpp"

using namespace eventium;
using namespace eventium::fixtures;

TEST(Arrangement, EventEncoding) {
  auto a = encode_arrangement(2, 1, 4);
  EXPECT_EQ(to_string(a, {"+", "-"}), "|0,+,+,+,r...>");
  auto b = encode_arrangement(3, 2, 4);
  EXPECT_EQ(to_string(b, {"+", "-"}), "|0,0,-,-,r...>");
}

TEST(Arrangement, NoEventEncoding) { EXPECT_EQ(to_string(encode_no_event(3)), "|0,0,0,r...>"); }

TEST(Arrangement, RejectsBadStep) {
  EXPECT_THROW(encode_arrangement(0, 1, 4), ValidationError);
  EXPECT_THROW(encode_arrangement(5, 1, 4), ValidationError);
}

TEST(Arrangement, Decode) {
  EXPECT_EQ(decode_arrangement(encode_arrangement(3, 2, 4)), (EventRecord{3, 2}));
  EXPECT_EQ(decode_arrangement(encode_no_event(3)), (EventRecord{3, 0}));
}

TEST(Arrangement, MalformedReportsCell) {
  EnvironmentArrangement bad({Cell::record(1), Cell::blank(), Cell::blank()});
  try {
    decode_arrangement(bad);
    FAIL() << "expected a malformed arrangement";
  } catch (const MalformedArrangement& e) {
    EXPECT_EQ(e.cell(), 2u);
  }
  EnvironmentArrangement mixed({Cell::blank(), Cell::record(1), Cell::record(2)});
  EXPECT_THROW(decode_arrangement(mixed), MalformedArrangement);
  EnvironmentArrangement gap({Cell::blank(), Cell::ready(), Cell::record(1)});
  EXPECT_THROW(decode_arrangement(gap), MalformedArrangement);
}

TEST(Arrangement, TrailingReadyIsImplicit) {
  EnvironmentArrangement a({Cell::blank(), Cell::record(1), Cell::ready()});
  EXPECT_EQ(a.length(), 2u);
  EXPECT_EQ(a.cell(7).kind, CellKind::Ready);
}

TEST(Registers, HistoryRoundTrip) {
  EventHistory h{{2, 1}, {5, 2}, {9, 0}};
  auto regs = encode_history(h, 9);
  ASSERT_EQ(regs.size(), 3u);
  EXPECT_EQ(to_string(regs[1], {"+", "-"}), "|0,0,0,0,-,-,-,-,-,r...>");
  EXPECT_EQ(decode_history(regs), h);
}

TEST(Registers, RejectOutOfOrderRegisters) {
  std::vector<EnvironmentArrangement> regs{encode_arrangement(4, 1, 6), encode_arrangement(2, 1, 6)};
  EXPECT_THROW(decode_history(regs), MalformedArrangement);
  std::vector<EnvironmentArrangement> after_empty{encode_no_event(6), encode_arrangement(2, 1, 6)};
  EXPECT_THROW(decode_history(after_empty), MalformedArrangement);
}

TEST(Pointer, SingleStepSupportIsPure) {
  MeasurementModel m = qubit_model(plus_x(), OperatorMatrix::zero(2, 2), 0.0, 4);
  m.step_probs[0] = 1.0;
  auto s = solve_single_event(m, {0.0, 1.0, 4});
  auto p = decohere_pointer(s, 4);
  for (const auto& g : p.groups) {
    std::size_t nonzero = 0;
    for (const auto& t : g.terms) nonzero += t.coefficient != Complex(0.0);
    EXPECT_EQ(nonzero, 1u);
    EXPECT_NEAR(g.coherence, 1.0, 1e-15);
  }
}

TEST(Pointer, PlusXGroupsSplitEvenly) {
  // sum_k p (1-p)^(k-1) over a long run -> 1, half per outcome.
  MeasurementModel m = qubit_model(plus_x(), OperatorMatrix::zero(2, 2), 0.3, 120);
  auto s = solve_single_event(m, {0.0, 1.0, 120});
  auto p = decohere_pointer(s, 120);
  ASSERT_EQ(p.groups.size(), 2u);
  EXPECT_NEAR(p.groups[0].weight, 0.5, 1e-14);
  EXPECT_NEAR(p.groups[1].weight, 0.5, 1e-14);
  // Free system: the pointer amplitude is psi_S(a|t_0) times ||chi||.
  EXPECT_NEAR(std::abs(p.groups[0].pointer_amplitude), 1.0 / std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(p.groups[0].coherence, 1.0, 1e-14);
}

TEST(Pointer, WeightsEqualMarginals) {
  MeasurementModel m = qubit_model(plus_x(), OperatorMatrix((0.8 * sigma_x().matrix()).eval()), 0.15, 30);
  auto s = solve_single_event(m, {0.0, 0.2, 30});
  auto marg = outcome_marginal(joint_distribution(s));
  auto p = decohere_pointer(s, 35);
  for (std::size_t a = 0; a < 2; ++a) EXPECT_NEAR(p.groups[a].weight, marg.probabilities[a], 1e-14);
  EXPECT_EQ(p.groups[0].terms.back().arrangement.length(), 35u);
}
