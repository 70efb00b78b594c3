#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "helpers.hpp"
#include "measfid/metrics.hpp"

using namespace measfid;

namespace {

Integrator mc(std::size_t n, std::uint64_t seed = 1) {
  Integrator in;
  in.kind = IntegratorKind::monte_carlo;
  in.mc_samples = n;
  in.seed = seed;
  return in;
}

}  // namespace

TEST(LowerBoundProbs, Examples) {
  EXPECT_NEAR(lower_bound_probs({{0.99, 0.99}, {}}), (1 + 2 * 0.99) / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(lower_bound_probs({{1.0, 1.0, 1.0}, {}}), 1.0);
  EXPECT_NEAR(lower_bound_probs({{0.9, 0.8, 0.7}, {}}), 0.848431, 5e-7);
}

TEST(LowerBoundProbs, RejectsOutOfRange) {
  try {
    lower_bound_probs({{0.5, 1.2}, {}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::out_of_range);
  }
  EXPECT_THROW(lower_bound_probs({{}, {}}), Error);
}

TEST(LowerBoundProbs, BothFormsAgree) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const int d = 2 + t % 15;
    std::vector<double> u(d);
    for (double& x : u) x = U(rng);
    EXPECT_NEAR(lower_bound_probs({u, {}}), bound_from_mean(x_bar(u), d), 1e-12);
  }
}

TEST(LowerBoundProbs, ScalingInDimension) {
  const double delta = 0.01;
  double prev = 1.0;
  for (int d : {2, 4, 16, 256}) {
    const double lb = lower_bound_probs({std::vector<double>(d, 1.0 - delta), {}});
    EXPECT_NEAR(lb - (1.0 - delta), delta / (1.0 + d), 1e-14);
    EXPECT_LT(lb, prev);
    prev = lb;
  }
}

TEST(LowerBoundStates, Examples) {
  EXPECT_DOUBLE_EQ(lower_bound_states({{1, 1}, std::vector<double>{1, 1}}), 1.0);
  EXPECT_NEAR(lower_bound_states({{0.99, 0.99}, std::vector<double>{0.99, 0.99}}), (1 + 2 * 0.9801) / 3, 1e-15);
  EXPECT_NEAR(lower_bound_states({{0.99, 0.99}, std::vector<double>{0.99, 0.99}}), 0.986733, 5e-7);
  EXPECT_DOUBLE_EQ(lower_bound_states({{0.7, 0.6, 0.9}, std::vector<double>{0, 0, 0}}), 0.25);
  EXPECT_THROW(lower_bound_states({{0.9, 0.9}, {}}), Error);
  EXPECT_THROW(lower_bound_states({{0.9, 0.9}, std::vector<double>{0.9}}), Error);
  EXPECT_THROW(lower_bound_states({{0.9, 0.9}, std::vector<double>{0.9, -0.1}}), Error);
}

TEST(AvgError, Examples) {
  FidelityResult f;
  f.value = 1.0;
  EXPECT_DOUBLE_EQ(avg_error(f).value, 0.0);
  f.value = 0.9933;
  f.std_err = 0.001;
  EXPECT_NEAR(avg_error(f).value, 0.0067, 1e-15);
  EXPECT_DOUBLE_EQ(avg_error(f).std_err, 0.001);
  f.value = 0.996667;
  EXPECT_NEAR(avg_error(f).value, 0.003333, 1e-15);
}

TEST(AvgFidelityProbs, IdealIsOne) {
  const Rank1Pvm pvm = Rank1Pvm::computational(2);
  const FidelityResult f = avg_fidelity_probs(pvm, pvm.as_povm());
  EXPECT_NEAR(f.value, 1.0, 1e-9);
  EXPECT_EQ(f.method, IntegrationMethod::quadrature);
  const Rank1Pvm p3 = Rank1Pvm::computational(3);
  EXPECT_NEAR(avg_fidelity_probs(p3, p3.as_povm(), mc(20'000)).value, 1.0, 1e-9);
}

TEST(AvgFidelityProbs, TableIFamily) {
  const Rank1Pvm pvm = Rank1Pvm::computational(2);
  const double u0 = 0.99;
  const double lb = lower_bound_probs({{u0, u0}, {}});
  const FidelityResult f0 = avg_fidelity_probs(pvm, testkit::table1_povm(u0, 0.0));
  EXPECT_GE(f0.value, 0.993333);
  EXPECT_LT(f0.value, 1.0);
  EXPECT_GE(f0.value, lb);
  ASSERT_TRUE(f0.first_sum.has_value());
  EXPECT_NEAR(*f0.first_sum, *f0.first_sum_analytic, 1e-9);
  const FidelityResult fr = avg_fidelity_probs(pvm, testkit::table1_povm(u0, std::sqrt(u0 * (1 - u0))));
  EXPECT_LT(fr.value, f0.value);
  EXPECT_GE(fr.value, lb - 5 * fr.error_estimate);
}

TEST(AvgFidelityProbs, QuadratureRequiresQubit) {
  Integrator in;
  in.kind = IntegratorKind::quadrature;
  const Rank1Pvm p3 = Rank1Pvm::computational(3);
  EXPECT_THROW(avg_fidelity_probs(p3, p3.as_povm(), in), Error);
}

TEST(AvgFidelityProbs, MonteCarloMatchesQuadrature) {
  const Rank1Pvm pvm = Rank1Pvm::computational(2);
  const Povm p = testkit::table1_povm(0.9, 0.2);
  const FidelityResult q = avg_fidelity_probs(pvm, p);
  const FidelityResult m = avg_fidelity_probs(pvm, p, mc(100'000, 3));
  EXPECT_EQ(m.method, IntegrationMethod::monte_carlo);
  EXPECT_LE(std::abs(q.value - m.value), 4.0 * m.std_err + q.error_estimate);
}

TEST(AvgFidelityProbs, BoundHoldsForDiagonalEffects) {
  std::mt19937_64 rng(4);
  for (int d : {3, 4}) {
    std::vector<Matrix> e(d, Matrix::Zero(d, d));
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (int i = 0; i < d; ++i) {
      std::vector<double> w(d);
      for (double& x : w) x = U(rng);
      w[i] += 3.0;
      const double s = std::accumulate(w.begin(), w.end(), 0.0);
      for (int k = 0; k < d; ++k) e[k](i, i) = w[k] / s;
    }
    const Povm p = validate_povm(e);
    const Rank1Pvm pvm = Rank1Pvm::computational(d);
    const FidelityResult f = avg_fidelity_probs(pvm, p, mc(50'000, 5));
    EXPECT_GE(f.value + 4 * f.std_err, lower_bound_probs({overlaps_u(pvm, p), {}}));
  }
}

TEST(AvgFidelityProbs, RelabelingInvariant) {
  std::mt19937_64 rng(6);
  const int d = 3;
  const Matrix u = testkit::random_unitary(d, rng);
  const Rank1Pvm pvm = Rank1Pvm::from_basis(u, 1e-9);
  const Povm p = testkit::noisy_pvm_povm(pvm, 0.1, rng);
  const std::vector<int> perm{2, 0, 1};
  Matrix u2(d, d);
  std::vector<Matrix> e2;
  for (int k = 0; k < d; ++k) {
    u2.col(k) = u.col(perm[k]);
    e2.push_back(p.effect(perm[k]));
  }
  const Rank1Pvm pvm2 = Rank1Pvm::from_basis(u2, 1e-9);
  const FidelityResult a = avg_fidelity_probs(pvm, p, mc(20'000, 9));
  const FidelityResult b = avg_fidelity_probs(pvm2, validate_povm(e2), mc(20'000, 9));
  // same Haar samples, same integrand up to summation order
  EXPECT_NEAR(a.value, b.value, 1e-12);
}

TEST(AvgFidelityProbs, RequiresMatchingShapes) {
  const Rank1Pvm p2 = Rank1Pvm::computational(2);
  EXPECT_THROW(avg_fidelity_probs(p2, Rank1Pvm::computational(3).as_povm()), Error);
  EXPECT_THROW(avg_fidelity_probs(p2, validate_povm({Matrix::Identity(2, 2)})), Error);
}

TEST(AvgFidelityStates, IdealIsOne) {
  const Rank1Pvm pvm = Rank1Pvm::computational(2);
  const NoisyDevice dev(pvm.as_povm(), testkit::projector_outputs(pvm), 0);
  EXPECT_NEAR(avg_fidelity_states(pvm, dev, Integrator{IntegratorKind::automatic, BlochQuadrature(64, 64)}).value,
              1.0, 1e-9);
}

TEST(AvgFidelityStates, ProjectorOutputsReduceToProbabilities) {
  const Rank1Pvm pvm = Rank1Pvm::computational(2);
  const Povm p = testkit::table1_povm(0.99);
  const NoisyDevice dev(p, testkit::projector_outputs(pvm), 0);
  const Integrator in{IntegratorKind::automatic, BlochQuadrature(64, 64)};
  const FidelityResult s = avg_fidelity_states(pvm, dev, in);
  const FidelityResult r = avg_fidelity_probs(pvm, p, in);
  EXPECT_NEAR(s.value, r.value, 1e-9 + s.error_estimate + r.error_estimate);
}

TEST(AvgFidelityStates, DepolarizedOutputsLower) {
  const Rank1Pvm pvm = Rank1Pvm::computational(2);
  const Povm p = testkit::table1_povm(0.99);
  std::vector<DensityMatrix> dep;
  for (int k = 0; k < 2; ++k) {
    dep.push_back(DensityMatrix::from_matrix(0.9 * pvm.projector(k) + 0.1 * Matrix::Identity(2, 2) / 2.0));
  }
  const Integrator in{IntegratorKind::automatic, BlochQuadrature(64, 64)};
  const double clean = avg_fidelity_states(pvm, NoisyDevice(p, testkit::projector_outputs(pvm), 0), in).value;
  const double noisy = avg_fidelity_states(pvm, NoisyDevice(p, dep, 0), in).value;
  EXPECT_LT(noisy, clean - 1e-3);
}

TEST(AvgFidelityStates, NeedsOutputStates) {
  const Rank1Pvm pvm = Rank1Pvm::computational(2);
  try {
    avg_fidelity_states(pvm, NoisyDevice(pvm.as_povm(), 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::no_output_states);
  }
}

TEST(FirstSumIdentity, MatchesMonteCarloInHigherDimension) {
  std::mt19937_64 rng(12);
  const Rank1Pvm pvm = Rank1Pvm::computational(4);
  const Povm p = testkit::noisy_pvm_povm(pvm, 0.3, rng);
  // avg_fidelity_probs throws NumericalFailure if the component disagrees
  const FidelityResult f = avg_fidelity_probs(pvm, p, mc(50'000, 13));
  EXPECT_NEAR(*f.first_sum, first_sum_identity(overlaps_u(pvm, p)), 0.01);
}
