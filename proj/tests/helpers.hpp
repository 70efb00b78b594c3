#pragma once

// Model builders shared by the unit and acceptance tests.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "measfid/measfid.hpp"

namespace measfid::testkit {

inline Matrix random_ginibre(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix g(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) g(i, j) = cplx(n(rng), n(rng));
  return g;
}

/// Haar-random unitary via QR with the phase fix.
inline Matrix random_unitary(int d, std::mt19937_64& rng) {
  Eigen::HouseholderQR<Matrix> qr(random_ginibre(d, d, rng));
  Matrix q = qr.householderQ() * Matrix::Identity(d, d);
  const Matrix r = qr.matrixQR();
  for (int j = 0; j < d; ++j) {
    const cplx ph = r(j, j) / std::abs(r(j, j));
    q.col(j) *= ph;
  }
  return q;
}

/// n effects E_k = S^{-1/2} A_k S^{-1/2} with Wishart A_k, S = sum A_k.
inline std::vector<Matrix> random_povm_effects(int d, int n, std::mt19937_64& rng, int rank = 0) {
  std::vector<Matrix> a;
  Matrix s = Matrix::Zero(d, d);
  for (int k = 0; k < n; ++k) {
    const Matrix g = random_ginibre(d, rank > 0 ? rank : d, rng);
    a.push_back(g * g.adjoint());
    s += a.back();
  }
  const Eigensystem es = eigh(s);
  const RealVector inv = es.values.cwiseSqrt().cwiseInverse();
  const Matrix w = es.vectors * inv.cast<cplx>().asDiagonal() * es.vectors.adjoint();
  for (auto& m : a) m = hermitize(w * m * w);
  return a;
}

inline Povm random_povm(int d, int n, std::mt19937_64& rng, int rank = 0) {
  return validate_povm(random_povm_effects(d, n, rng, rank), Tolerances{1e-9, 1e-9, 1e-9, 1e-9});
}

/// Noisy effects close to a PVM: (1 - t) Pi_k + t A_k.
inline Povm noisy_pvm_povm(const Rank1Pvm& pvm, double t, std::mt19937_64& rng) {
  const int d = pvm.dim();
  const std::vector<Matrix> r = random_povm_effects(d, d, rng);
  std::vector<Matrix> e;
  for (int k = 0; k < d; ++k) e.push_back((1.0 - t) * pvm.projector(k) + t * r[k]);
  return validate_povm(e, Tolerances{1e-9, 1e-9, 1e-9, 1e-9});
}

/// Diagonal effects in the computational basis with E_k(k,k) = u, the
/// remaining weight spread evenly over the other outcomes.
inline Povm uniform_diagonal_povm(int d, double u) {
  std::vector<Matrix> e;
  const double rest = d > 1 ? (1.0 - u) / (d - 1) : 0.0;
  for (int k = 0; k < d; ++k) {
    Matrix m = Matrix::Zero(d, d);
    for (int i = 0; i < d; ++i) m(i, i) = i == k ? u : rest;
    e.push_back(m);
  }
  return validate_povm(e);
}

/// The qubit family at (u0, gamma) as a generic Povm.
inline Povm table1_povm(double u0, double gamma = 0.0) {
  return CoherentQubitPovm::make(u0, cplx(gamma, 0.0)).povm();
}

inline std::vector<DensityMatrix> projector_outputs(const Rank1Pvm& pvm) {
  std::vector<DensityMatrix> rho;
  for (int k = 0; k < pvm.dim(); ++k) rho.push_back(DensityMatrix::pure(pvm.state(k)));
  return rho;
}

inline DensityMatrix random_density(int d, std::mt19937_64& rng) {
  const Matrix g = random_ginibre(d, d, rng);
  Matrix r = g * g.adjoint();
  r /= r.trace().real();
  return DensityMatrix::from_matrix(hermitize(r));
}

}  // namespace measfid::testkit
