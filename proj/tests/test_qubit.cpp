#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "measfid/qubit.hpp"

using namespace measfid;

namespace {

constexpr double kPi = std::numbers::pi;

double closed_form_measure(double u0, double g) {
  const double a = (1.0 - u0) / (2.0 * g);
  return 0.5 * (1.0 - a / std::sqrt(1.0 + a * a));
}

}  // namespace

TEST(CoherentQubitPovm, MakeChecksRange) {
  EXPECT_NO_THROW(CoherentQubitPovm::make(0.99, cplx(0.09, 0.0)));
  EXPECT_THROW(CoherentQubitPovm::make(0.4, cplx(0.0, 0.0)), Error);
  EXPECT_THROW(CoherentQubitPovm::make(0.99, cplx(0.2, 0.0)), Error);
  const CoherentQubitPovm e = CoherentQubitPovm::make(0.99, std::polar(std::sqrt(0.99 * 0.01) + 1e-13, 0.3));
  EXPECT_LE(e.gamma_abs(), e.r_max());
  EXPECT_NO_THROW(e.povm());
  EXPECT_NEAR(e.phase(), 0.3, 1e-12);
}

TEST(CoherentQubitPovm, ClosedFormR0MatchesMatrix) {
  const CoherentQubitPovm e = CoherentQubitPovm::make(0.97, std::polar(0.1, 1.1));
  const Matrix e0 = e.effects()[0];
  for (double t : {0.1, 1.0, 2.5})
    for (double p : {0.0, 2.0, 4.0}) EXPECT_NEAR(e.r0(t, p), expectation(bloch_vector(t, p), e0), 1e-14);
}

TEST(FgGap, VanishesOnBasisStates) {
  const Rank1Pvm pvm = Rank1Pvm::computational(2);
  const Povm p = testkit::table1_povm(0.99, 0.05);
  EXPECT_DOUBLE_EQ(fg_gap(pvm, p, 0, 1, PureState::basis(2, 0)), 0.0);
  EXPECT_DOUBLE_EQ(fg_gap(pvm, p, 0, 1, PureState::basis(2, 1)), 0.0);
  EXPECT_THROW(fg_gap(pvm, p, 0, 0, PureState::basis(2, 0)), Error);
}

TEST(FgGap, PlusStateExample) {
  // gamma = 0: r0 = p0 u0 + p1 (1 - u0); at |+>, r0 = r1 = 1/2 and
  // f - g = 1/4 - u0/4
  const Rank1Pvm pvm = Rank1Pvm::computational(2);
  Vector v(2);
  v << 1.0, 1.0;
  EXPECT_NEAR(fg_gap(pvm, testkit::table1_povm(0.9), 0, 1, PureState::normalized(v)), 0.25 - 0.9 / 4, 1e-15);
}

TEST(FgGap, ClosedFormMatchesGeneric) {
  const Rank1Pvm pvm = Rank1Pvm::computational(2);
  const CoherentQubitPovm e = CoherentQubitPovm::make(0.95, cplx(0.15, 0.0));
  const Povm p = e.povm();
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> T(0.0, kPi);
  std::uniform_real_distribution<double> P(0.0, 2 * kPi);
  for (int i = 0; i < 200; ++i) {
    const double t = T(rng);
    const double ph = P(rng);
    EXPECT_NEAR(detail::qubit_gap(e, t, ph), fg_gap(pvm, p, 0, 1, PureState::from_amplitudes(bloch_vector(t, ph))),
                1e-12);
  }
}

TEST(Regions, ScalarAndMatrixFormsAgree) {
  const CoherentQubitPovm e = CoherentQubitPovm::make(0.99, std::polar(0.09, 0.7));
  for (double t = 0.05; t < kPi; t += 0.3)
    for (double p = 0.0; p < 2 * kPi; p += 0.4)
      for (int j : {0, 1}) EXPECT_NEAR(region_value(e, j, t, p), detail::region_value_scalar(e, j, t, p), 1e-14);
  EXPECT_THROW(region_value(e, 2, 0.1, 0.1), Error);
}

TEST(Regions, MembershipExamples) {
  const CoherentQubitPovm e = CoherentQubitPovm::make(0.99, cplx(0.09, 0.0));
  // A0 sits on the cos(phi) < 0 side near the north pole
  EXPECT_TRUE(region_membership(e, 0, 0.5, kPi));
  EXPECT_FALSE(region_membership(e, 0, 0.5, 0.0));
  EXPECT_TRUE(region_membership(e, 1, kPi - 0.5, 0.0));
  EXPECT_FALSE(region_membership(e, 1, kPi - 0.5, kPi));
  const CoherentQubitPovm flat = CoherentQubitPovm::make(0.99, cplx(0.0, 0.0));
  EXPECT_FALSE(region_membership(flat, 0, 0.5, kPi));
}

TEST(Regions, EnvelopeContainsEveryMember) {
  for (double ph : {0.0, 1.2}) {
    const CoherentQubitPovm e = CoherentQubitPovm::make(0.99, std::polar(0.09, ph));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> C(-1.0, 1.0);
    std::uniform_real_distribution<double> P(0.0, 2 * kPi);
    int members = 0;
    for (int i = 0; i < 20'000; ++i) {
      const double t = std::acos(C(rng));
      const double p = P(rng);
      for (int j : {0, 1}) {
        if (region_membership(e, j, t, p)) {
          ++members;
          EXPECT_TRUE(envelope_contains(e, j, t, p)) << "j=" << j << " t=" << t << " p=" << p;
        }
      }
    }
    EXPECT_GT(members, 0);
  }
}

TEST(MeasureBounds, ClosedFormAndMonotone) {
  const double u0 = 0.99;
  const BlochQuadrature q(128, 128);
  double prev = 0.0;
  for (double frac : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const double g = frac * CoherentQubitPovm::r_max(u0);
    const RegionReport r = measure_bounds(CoherentQubitPovm::make(u0, cplx(g, 0.0)), q);
    if (g == 0.0) {
      EXPECT_DOUBLE_EQ(r.mu_A0_bound, 0.0);
    } else {
      EXPECT_NEAR(r.mu_A0_bound, closed_form_measure(u0, g), 1e-10);
    }
    EXPECT_NEAR(r.mu_A0_bound, r.mu_A1_bound, 1e-15);
    EXPECT_GE(r.mu_A0_bound, prev);
    prev = r.mu_A0_bound;
    EXPECT_LE(r.mu_A0_measure, r.mu_A0_bound + 5.0 * r.measure_error + 1e-3);
    EXPECT_LE(r.mu_A1_measure, r.mu_A1_bound + 5.0 * r.measure_error + 1e-3);
  }
}

TEST(MeasureBounds, VanishAsGammaShrinks) {
  const BlochQuadrature q(64, 64);
  const RegionReport r = sufficient_condition(CoherentQubitPovm::make(0.99, cplx(1e-6, 0.0)), q);
  EXPECT_LT(r.mu_A0_bound, 1e-3);
  EXPECT_LT(r.delta0, 1e-8);
  EXPECT_LT(r.delta1, 1e-8);
}

TEST(SufficientCondition, HoldsWithoutCoherence) {
  const RegionReport r = sufficient_condition(CoherentQubitPovm::make(0.99, cplx(0.0, 0.0)), BlochQuadrature(64, 64));
  EXPECT_DOUBLE_EQ(r.delta0, 0.0);
  EXPECT_DOUBLE_EQ(r.delta1, 0.0);
  EXPECT_GE(r.lhs, 0.0);
  EXPECT_TRUE(r.sufficient_ok);
}

TEST(SufficientCondition, FullGapMatchesFidelityGap) {
  const BlochQuadrature q(128, 128);
  for (double g : {0.0, 0.05, 0.0994987}) {
    const CoherentQubitPovm e = CoherentQubitPovm::make(0.99, cplx(g, 0.0));
    const RegionReport r = sufficient_condition(e, q);
    const QuadratureResult f = exact_fidelity_qubit(e, q);
    EXPECT_NEAR(f.value - qubit_lower_bound(0.99), 2.0 * r.full_gap_integral,
                1e-10 + f.error_estimate + 2.0 * r.full_gap_error);
    if (g == 0.0) EXPECT_DOUBLE_EQ(r.lhs, r.full_gap_integral);
  }
}

TEST(SufficientCondition, ReportsPhase) {
  const RegionReport r = sufficient_condition(CoherentQubitPovm::make(0.99, std::polar(0.05, 0.9)), BlochQuadrature(64, 64));
  EXPECT_NEAR(r.rotated_phase, 0.9, 1e-12);
}

TEST(ExactFidelity, PhaseIndependent) {
  const BlochQuadrature q;
  const double ref = exact_fidelity_qubit(CoherentQubitPovm::make(0.99, cplx(0.07, 0.0)), q).value;
  for (double ph : {kPi / 3, kPi / 2}) {
    EXPECT_NEAR(exact_fidelity_qubit(CoherentQubitPovm::make(0.99, std::polar(0.07, ph)), q).value, ref, 1e-9);
  }
}

TEST(ExactFidelity, IntegralOfGIsU0OverSix) {
  const double u0 = 0.97;
  const QuadratureResult r = bloch_integrate(
      [&](double t, double) {
        const double c = std::cos(t / 2.0);
        const double s = std::sin(t / 2.0);
        return u0 * c * c * s * s;
      },
      BlochQuadrature());
  EXPECT_NEAR(r.value, u0 / 6.0, 1e-12);
}

TEST(ExactFidelity, ExtremePoint) {
  // u0 = 1/2, gamma = 1/2: E0 = |+><+|
  const CoherentQubitPovm e = CoherentQubitPovm::make(0.5, cplx(0.5, 0.0));
  const QuadratureResult f = exact_fidelity_qubit(e, BlochQuadrature());
  EXPECT_GE(f.value, qubit_lower_bound(0.5) - scan_tolerance(f.error_estimate));
  EXPECT_LE(f.value, 1.0);
}

TEST(Sweep, RowsAndEndpoints) {
  const std::vector<SweepRow> rows = sweep_table1(BlochQuadrature(64, 64), {0.99, 0.995}, 5);
  ASSERT_EQ(rows.size(), 10u);
  EXPECT_DOUBLE_EQ(rows[0].gamma_abs, 0.0);
  EXPECT_DOUBLE_EQ(rows[4].gamma_abs, CoherentQubitPovm::r_max(0.99));
  EXPECT_DOUBLE_EQ(rows[5].u0, 0.995);
  for (const SweepRow& r : rows) {
    EXPECT_NEAR(r.lb + r.ub, 1.0, 1e-15);
    EXPECT_NEAR(r.gap, r.F_exact - r.lb, 1e-15);
    EXPECT_GE(r.gap, -scan_tolerance(r.quad_error));
  }
  EXPECT_THROW(sweep_table1(BlochQuadrature(8, 8), {1.0}, 2), Error);
}

TEST(Sweep, ThreadCountDoesNotChangeRows) {
  const auto a = sweep_table1(BlochQuadrature(32, 32), {0.9, 0.99}, 4, 0.0, 1);
  const auto b = sweep_table1(BlochQuadrature(32, 32), {0.9, 0.99}, 4, 0.0, 3);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].F_exact, b[i].F_exact);
}

TEST(Sweep, CsvFormat) {
  std::vector<SweepRow> rows(1);
  rows[0] = {0.99, 0.0, 0.995, 0.9933333333333333, 0.0066666666666667, 0.0016666666666667, 0.0};
  std::ostringstream os;
  write_sweep_csv(os, rows);
  EXPECT_EQ(os.str(),
            "u0,gamma_abs,F_exact,lb,ub,gap\n"
            "0.99,0,0.995,0.993333333333,0.00666666666667,0.00166666666667\n");
}

TEST(Scan, CoarseGridHasNoViolations) {
  const ScanResult r = violation_scan(u0_grid(0.5, 0.99, 0.07), 6, BlochQuadrature(64, 64));
  EXPECT_EQ(r.points, 8u * 6u);
  EXPECT_TRUE(r.violations.empty());
  EXPECT_LE(r.max_negative_gap, 0.0);
}

TEST(Scan, GridConstruction) {
  const std::vector<double> g = u0_grid(0.5, 0.99, 0.01);
  ASSERT_EQ(g.size(), 50u);
  EXPECT_NEAR(g.back(), 0.99, 1e-12);
  EXPECT_THROW(u0_grid(0.5, 0.4, 0.01), Error);
  EXPECT_DOUBLE_EQ(scan_tolerance(0.0), 1e-12);
  EXPECT_DOUBLE_EQ(scan_tolerance(1e-6), 5e-6);
}
