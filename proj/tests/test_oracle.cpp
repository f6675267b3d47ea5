#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "eventium/oracle.hpp"
#include "test_support.hpp"

using namespace eventium;
using namespace eventium::fixtures;

namespace {

OracleSpec qubit_spec(const StateVector& initial, const OperatorMatrix& h, double g, double dt, std::size_t n) {
  OracleSpec s;
  s.system_h = h;
  s.outcomes = z_outcomes();
  s.initial = initial;
  s.grid = {0.0, dt, n};
  s.couplings.assign(n, g);
  return s;
}

OperatorMatrix scaled_x(double c) { return OperatorMatrix((c * sigma_x().matrix()).eval()); }

}  // namespace

TEST(TotalHamiltonian, HermitianOnFullSpace) {
  auto h = build_total_hamiltonian(qubit_spec(plus_x(), scaled_x(0.7), 1.5, 0.1, 8));
  EXPECT_EQ(h.dim(), 54u);
  auto d = h.dense();
  EXPECT_EQ(d.rows(), 54u);
  EXPECT_TRUE(d.is_hermitian());
}

TEST(TotalHamiltonian, TimerCouplingIdleOnFiredLevels) {
  auto h = build_total_hamiltonian(qubit_spec(plus_x(), scaled_x(0.7), 1.5, 0.1, 4));
  const std::size_t nt = 5;
  for (std::size_t a = 1; a <= 2; ++a) {
    Matrix fired = Matrix::Zero(3, 3);
    fired(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)) = 1.0;
    Matrix prod = h.timer_detector.matrix() * tensor_product(OperatorMatrix::identity(nt), OperatorMatrix(fired)).matrix();
    EXPECT_LT(max_abs(prod), 1e-15);
  }
}

TEST(TotalHamiltonian, TimerShiftIsExact) {
  auto gen = cyclic_shift_generator(7, 0.3);
  Matrix u = propagator(gen, 0.3).matrix();
  for (Eigen::Index j = 0; j < 7; ++j)
    for (Eigen::Index i = 0; i < 7; ++i) EXPECT_NEAR(std::abs(u(i, j)), i == (j + 1) % 7 ? 1.0 : 0.0, 1e-12);
}

TEST(Extraction, ZeroCouplingNeverFires) {
  auto h = build_total_hamiltonian(qubit_spec(plus_x(), scaled_x(0.9), 0.0, 0.1, 6));
  auto x = simulate_and_extract(h);
  for (std::size_t k = 0; k <= 6; ++k) {
    EXPECT_NEAR(std::abs(x.branches.gamma[k] - Complex(1.0)), 0.0, 1e-12);
    EXPECT_LT(std::abs(x.branches.chi[k]), 1e-15);
  }
  EXPECT_NEAR(x.no_event_weight, 1.0, 1e-12);
}

TEST(Extraction, QuarterTurnKickIsIdealMeasurement) {
  const double dt = 0.1;
  auto h = build_total_hamiltonian(qubit_spec(plus_x(), scaled_x(0.9), std::numbers::pi / 2 / dt, dt, 3));
  auto x = simulate_and_extract(h);
  EXPECT_NEAR(std::norm(x.branches.chi[1]), 1.0, 1e-12);
  EXPECT_NEAR(std::abs(x.branches.gamma[1]), 0.0, 1e-12);
  StateVector after = propagator(scaled_x(0.9), dt) * plus_x();
  EXPECT_NEAR(x.joint[1][0], std::norm(after[0]), 1e-12);
  EXPECT_NEAR(x.joint[1][1], std::norm(after[1]), 1e-12);
}

TEST(Extraction, ModerateCouplingMatchesAnalytic) {
  const double dt = 0.05, g = 3.0, eps = 0.4;
  auto spec = qubit_spec(plus_x(), scaled_x(1.1), g, dt, 20);
  spec.ready_energy = eps;
  auto x = simulate_and_extract(build_total_hamiltonian(spec));
  MeasurementModel m = qubit_model(plus_x(), scaled_x(1.1), kick_probability(g, dt), 20);
  m.step_phases.assign(20, -eps * dt);
  auto s = solve_single_event(m, spec.grid);
  for (std::size_t k = 1; k <= 20; ++k) {
    EXPECT_NEAR(std::abs(x.branches.chi[k] - s.branches.chi[k]), 0.0, 1e-8);
    EXPECT_NEAR(std::abs(x.branches.gamma[k] - s.branches.gamma[k]), 0.0, 1e-8);
    for (std::size_t a = 0; a < 2; ++a) EXPECT_NEAR(x.joint[k][a], s.probability(k, a), 1e-8);
  }
  EXPECT_LT(x.max_norm_drift, 1e-10);
}

TEST(Extraction, RabiTableMatchesReference) {
  const double ref[6][2] = {{0.039302979067894324, 0.0001665239306631602}, {0.03727455544844826, 0.000637105883156076},
                            {0.03504807708560614, 0.0013672298153901443},  {0.03266630162111506, 0.0023117112149589787},
                            {0.030171916060793637, 0.0034255319927633835}, {0.027606764885907867, 0.0046646085909554215}};
  auto spec = qubit_spec(up(), scaled_x(0.65), 2.0, 0.1, 6);
  spec.ready_energy = 0.7;
  auto x = simulate_and_extract(build_total_hamiltonian(spec));
  for (std::size_t k = 1; k <= 6; ++k)
    for (std::size_t a = 0; a < 2; ++a) EXPECT_NEAR(x.joint[k][a], ref[k - 1][a], 1e-13);
  EXPECT_NEAR(x.no_event_weight, 0.7853566944023482, 1e-13);
}

TEST(Extraction, BranchStatesMatchConditionedState) {
  const double dt = 0.1, g = 2.2, eps = 0.9;
  auto spec = qubit_spec(plus_x(), scaled_x(0.75), g, dt, 8);
  spec.ready_energy = eps;
  auto x = simulate_and_extract(build_total_hamiltonian(spec));
  MeasurementModel m = qubit_model(plus_x(), scaled_x(0.75), kick_probability(g, dt), 8);
  m.step_phases.assign(8, -eps * dt);
  auto c = conditioned_state(m, spec.grid, 8);
  for (std::size_t k = 1; k <= 8; ++k)
    for (std::uint32_t a = 1; a <= 2; ++a) {
      const auto k32 = static_cast<std::uint32_t>(k);
      // An event at the conditioning reading itself carries no closing record.
      const auto* b = c.find(k == 8 ? EventHistory{{k32, a}} : EventHistory{{k32, a}, {8, 0}});
      ASSERT_NE(b, nullptr);
      Vector expect = b->amplitude * b->system.amplitudes();
      EXPECT_LT((x.branch_states[k][a - 1] - expect).norm(), 1e-10) << k << "," << a;
    }
  const auto* none = c.find(EventHistory{{8, 0}});
  EXPECT_LT((x.no_event_state - none->amplitude * none->system.amplitudes()).norm(), 1e-10);
}

TEST(Extraction, PlusXBranchesSplitChi) {
  auto x = simulate_and_extract(build_total_hamiltonian(qubit_spec(plus_x(), OperatorMatrix::zero(2, 2), 4.0, 0.1, 6)));
  for (std::size_t k = 1; k <= 6; ++k)
    for (std::size_t a = 0; a < 2; ++a) EXPECT_NEAR(x.joint[k][a], std::norm(x.branches.chi[k]) / 2.0, 1e-14);
}

TEST(Chain, TwoDetectorsMatchReference) {
  auto spec = qubit_spec(plus_x(), scaled_x(0.4), 2.4, 0.25, 4);
  spec.detectors = 2;
  auto run = simulate_event_chain(build_total_hamiltonian(spec));
  auto find = [&](const EventHistory& h) {
    for (const auto& [k, p] : run.probabilities)
      if (k == h) return p;
    return -1.0;
  };
  EXPECT_NEAR(find(EventHistory{{1, 1}, {2, 1}}), 0.050316911475839866, 1e-13);
  EXPECT_NEAR(find(EventHistory{{1, 1}, {3, 2}}), 0.0013664288039235979, 1e-13);
  EXPECT_NEAR(find(EventHistory{{2, 2}, {4, 1}}), 0.0009307824384828, 1e-13);
  EXPECT_NEAR(find(EventHistory{{1, 2}, {2, 2}}), 0.050316911475839866, 1e-13);
  EXPECT_NEAR(find(EventHistory{{4, 0}}), 0.21530032709613361, 1e-13);
  EXPECT_NEAR(run.total(), 1.0, 1e-12);
}

TEST(Chain, TwoDetectorsMatchChainAmplitudes) {
  const double g = 2.4, dt = 0.25;
  auto spec = qubit_spec(plus_x(), scaled_x(0.4), g, dt, 4);
  spec.detectors = 2;
  auto run = simulate_event_chain(build_total_hamiltonian(spec));
  ChainModel c = qubit_chain(plus_x(), scaled_x(0.4), kick_probability(g, dt), 4, 2);
  ChainEvaluator ev(c, spec.grid);
  for (const auto& [h, p] : run.probabilities) EXPECT_NEAR(std::norm(ev.amplitude(h)), p, 1e-12) << to_string(h);
}

TEST(Chain, DeadTimeMatchesChainAmplitudes) {
  const double g = 2.0, dt = 0.2;
  auto spec = qubit_spec(plus_x(), scaled_x(0.8), g, dt, 6);
  spec.detectors = 2;
  spec.dead_time_steps = 2;
  auto run = simulate_event_chain(build_total_hamiltonian(spec));
  ChainModel c = qubit_chain(plus_x(), scaled_x(0.8), kick_probability(g, dt), 6, 2);
  c.dead_time_steps = 2;
  ChainEvaluator ev(c, spec.grid);
  for (const auto& [h, p] : run.probabilities) EXPECT_NEAR(std::norm(ev.amplitude(h)), p, 1e-12) << to_string(h);
}

TEST(Calibration, RecoversConstantSchedule) {
  auto t = branch_table_from(std::vector<double>(10, 0.1), std::vector<double>(10, -0.3), 10);
  auto c = calibrate_rates(t);
  ASSERT_EQ(c.step_probs.size(), 10u);
  for (std::size_t k = 0; k < 10; ++k) {
    EXPECT_NEAR(c.step_probs[k], 0.1, 1e-15);
    EXPECT_NEAR(c.step_phases[k], -0.3, 1e-15);
  }
  EXPECT_FALSE(c.truncated_at);
}

TEST(Calibration, RoundTripThroughOracle) {
  std::mt19937_64 rng(4);
  MeasurementModel m = qubit_model(plus_x(), scaled_x(0.6), 0.0, 12);
  m.step_probs = random_schedule(12, rng, 0.0, 0.5);
  m.step_phases.assign(12, 0.02);
  ClockGrid grid{0.0, 0.05, 12};
  auto x = simulate_and_extract(build_total_hamiltonian(ladder_for_schedule(m, grid)));
  auto c = calibrate_rates(x.branches);
  for (std::size_t k = 0; k < 12; ++k) {
    EXPECT_NEAR(c.step_probs[k], m.step_probs[k], 1e-10);
    EXPECT_NEAR(c.step_phases[k], 0.02, 1e-10);
  }
}

TEST(Calibration, TruncatesAfterCertainDetection) {
  std::vector<double> p{0.3, 1.0, 0.2, 0.2};
  auto c = calibrate_rates(branch_table_from(p, {}, 4));
  ASSERT_TRUE(c.truncated_at);
  EXPECT_EQ(*c.truncated_at, 3u);
  EXPECT_EQ(c.step_probs.size(), 2u);
  EXPECT_EQ(c.warnings.size(), 1u);
}

TEST(Calibration, LadderRejectsVaryingPhases) {
  MeasurementModel m = qubit_model(plus_x(), scaled_x(0.6), 0.2, 3);
  m.step_phases = {0.1, 0.2, 0.1};
  EXPECT_THROW(ladder_for_schedule(m, {0.0, 0.1, 3}), ValidationError);
}

TEST(EffectiveModel, ChannelScalesMatchOracle) {
  auto spec = qubit_spec(plus_x(), scaled_x(0.9), 2.5, 0.08, 10);
  spec.channel_scale = {1.0, 0.5};
  spec.ready_energy = -0.3;
  auto x = simulate_and_extract(build_total_hamiltonian(spec));
  auto j = joint_distribution(effective_step_model(spec), spec.grid);
  for (std::size_t k = 1; k <= 10; ++k)
    for (std::size_t a = 0; a < 2; ++a) EXPECT_NEAR(j.at(k, a), x.joint[k][a], 1e-12);
  EXPECT_NEAR(j.no_event_weight, x.no_event_weight, 1e-12);
}

TEST(Check, UniformLadderAgrees) {
  auto r = oracle_check(qubit_spec(plus_x(), scaled_x(1.2), 1.7, 0.05, 16));
  EXPECT_LT(r.max_joint_deviation, 1e-10);
  EXPECT_LT(r.max_branch_deviation, 1e-10);
}

TEST(Wdw, FrozenResiduals) {
  Matrix h(3, 3);
  h << 0.3, Complex(0.2, -0.1), 0.0, Complex(0.2, 0.1), -0.5, 0.4, 0.0, 0.4, 1.1;
  EXPECT_NEAR(wdw_residual(OperatorMatrix(h), StateVector::basis(3, 0), 4, 0.3).residual, 0.893746461003722, 1e-12);
  EXPECT_NEAR(wdw_residual(OperatorMatrix(h), StateVector::basis(3, 0), 8, 0.3).residual, 1.1941010937490368, 1e-12);
}

TEST(Wdw, DoublingFromSixteenDecreases) {
  // Not monotone in general (4 -> 8 above goes up); from 16 on it falls here.
  Matrix h(3, 3);
  h << 0.3, Complex(0.2, -0.1), 0.0, Complex(0.2, 0.1), -0.5, 0.4, 0.0, 0.4, 1.1;
  const double ref[] = {1.4813014835036138, 1.3437786016664348, 0.18976445181222135};
  std::size_t d = 16;
  for (double r : ref) {
    EXPECT_NEAR(wdw_residual(OperatorMatrix(h), StateVector::basis(3, 0), d, 0.3).residual, r, 1e-11) << d;
    d *= 2;
  }
}

TEST(Wdw, StaticRestIsAnExactSolution) {
  EXPECT_LT(wdw_residual(OperatorMatrix::zero(2, 2), plus_x(), 9, 0.2).residual, 1e-12);
}

TEST(Wdw, NeedsEnoughReadings) {
  auto h = build_total_hamiltonian(qubit_spec(plus_x(), scaled_x(0.5), 1.0, 0.1, 4));
  EXPECT_THROW(wdw_residual(h, 4), ValidationError);
  EXPECT_NO_THROW(wdw_residual(h, 5));
}
