#pragma once

// Validated quantum objects on a small d-dimensional Hilbert space: pure and
// mixed states, POVMs, rank-1 PVMs, plus the handful of dense Hermitian
// helpers (eigendecomposition, PSD square root, Uhlmann fidelity) that the
// rest of the library builds on.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "measfid/error.hpp"

namespace measfid {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

struct Tolerances {
  double psd = 1e-10;
  double herm = 1e-10;
  double complete = 1e-9;
  double norm = 1e-10;
};

inline double max_abs(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline double hermitian_residual(const Matrix& m) { return max_abs(m - m.adjoint()); }

inline Matrix hermitize(const Matrix& m) { return (m + m.adjoint()) / 2.0; }

inline void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw Error(ErrorKind::dim_mismatch, std::string(what) + " must be a non-empty square matrix");
  }
  if (!m.allFinite()) {
    throw Error(ErrorKind::out_of_range, std::string(what) + " has non-finite entries");
  }
}

struct Eigensystem {
  RealVector values;  // ascending
  Matrix vectors;     // columns
};

/// Hermitian eigendecomposition of (m + m^dagger)/2.
inline Eigensystem eigh(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(hermitize(m));
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorKind::numerical_failure, "Hermitian eigensolver did not converge");
  }
  return {solver.eigenvalues(), solver.eigenvectors()};
}

inline double min_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(hermitize(m), Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorKind::numerical_failure, "Hermitian eigensolver did not converge");
  }
  return solver.eigenvalues()(0);
}

/// Applies a real function to the spectrum of a Hermitian matrix.
template <class Fn>
Matrix spectral_apply(const Matrix& m, Fn&& fn) {
  const Eigensystem es = eigh(m);
  RealVector mapped(es.values.size());
  for (Eigen::Index i = 0; i < es.values.size(); ++i) mapped(i) = fn(es.values(i));
  return es.vectors * mapped.cast<cplx>().asDiagonal() * es.vectors.adjoint();
}

/// Square root of a PSD matrix. Eigenvalues below the rounding floor
/// (64 eps times the spectral radius) are treated as exact zeros.
inline Matrix psd_sqrt(const Matrix& m) {
  const Eigensystem es = eigh(m);
  const double scale = std::max(1.0, es.values.cwiseAbs().maxCoeff());
  const double cutoff = 64.0 * std::numeric_limits<double>::epsilon() * scale;
  RealVector roots(es.values.size());
  for (Eigen::Index i = 0; i < roots.size(); ++i) {
    roots(i) = es.values(i) > cutoff ? std::sqrt(es.values(i)) : 0.0;
  }
  return es.vectors * roots.cast<cplx>().asDiagonal() * es.vectors.adjoint();
}

class DensityMatrix;

class PureState {
 public:
  /// Requires unit norm within tol.
  static PureState from_amplitudes(Vector amps, double tol = 1e-10) {
    if (amps.size() == 0) throw Error(ErrorKind::dim_mismatch, "empty state vector");
    if (!amps.allFinite()) throw Error(ErrorKind::out_of_range, "non-finite amplitude");
    const double n = amps.norm();
    if (std::abs(n - 1.0) > tol) {
      throw Error(ErrorKind::not_normalized, "state norm " + std::to_string(n));
    }
    return PureState(std::move(amps));
  }

  static PureState normalized(Vector amps) {
    if (amps.size() == 0) throw Error(ErrorKind::dim_mismatch, "empty state vector");
    const double n = amps.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw Error(ErrorKind::not_normalized, "cannot normalize a zero or non-finite vector");
    }
    return PureState(amps / n);
  }

  static PureState basis(int dim, int k) {
    Vector v = Vector::Zero(dim);
    v(k) = 1.0;
    return PureState(std::move(v));
  }

  int dim() const { return static_cast<int>(amps_.size()); }
  const Vector& amplitudes() const { return amps_; }
  Matrix projector() const { return amps_ * amps_.adjoint(); }

 private:
  explicit PureState(Vector v) : amps_(std::move(v)) {}
  Vector amps_;
};

class DensityMatrix {
 public:
  static DensityMatrix from_matrix(const Matrix& m, const Tolerances& tol = {}) {
    require_square(m, "density matrix");
    const double herm = hermitian_residual(m);
    if (herm > tol.herm) {
      throw Error(ErrorKind::not_hermitian, "density matrix residual " + std::to_string(herm));
    }
    Matrix h = hermitize(m);
    const double tr = h.trace().real();
    if (std::abs(tr - 1.0) > 1e-10) {
      throw Error(ErrorKind::not_normalized, "density matrix trace " + std::to_string(tr));
    }
    const double lo = min_eigenvalue(h);
    if (lo < -tol.psd) {
      throw Error(ErrorKind::not_psd, "density matrix minimum eigenvalue " + std::to_string(lo));
    }
    return DensityMatrix(std::move(h));
  }

  static DensityMatrix pure(const PureState& s) { return DensityMatrix(s.projector()); }

  static DensityMatrix maximally_mixed(int dim) {
    return DensityMatrix(Matrix::Identity(dim, dim) / static_cast<double>(dim));
  }

  int dim() const { return static_cast<int>(m_.rows()); }
  const Matrix& matrix() const { return m_; }

 private:
  explicit DensityMatrix(Matrix m) : m_(std::move(m)) {}
  Matrix m_;
};

/// Worst-case violations of the POVM conditions, reported even when valid.
struct PovmDiagnostics {
  std::size_t worst_index = 0;
  double min_eig = 0.0;  // minimum over effects of the minimum eigenvalue
  double completeness_residual = 0.0;
  double hermitian_residual = 0.0;
};

inline PovmDiagnostics povm_diagnostics(const std::vector<Matrix>& effects) {
  if (effects.empty()) throw Error(ErrorKind::dim_mismatch, "POVM has no effects");
  const Eigen::Index d = effects.front().rows();
  PovmDiagnostics diag;
  diag.min_eig = std::numeric_limits<double>::infinity();
  Matrix sum = Matrix::Zero(d, d);
  for (std::size_t k = 0; k < effects.size(); ++k) {
    const Matrix& e = effects[k];
    require_square(e, "effect");
    if (e.rows() != d) {
      throw Error(ErrorKind::dim_mismatch, "effect " + std::to_string(k) + " has dimension " +
                                               std::to_string(e.rows()) + ", expected " +
                                               std::to_string(d));
    }
    diag.hermitian_residual = std::max(diag.hermitian_residual, hermitian_residual(e));
    const double lo = min_eigenvalue(e);
    if (lo < diag.min_eig) {
      diag.min_eig = lo;
      diag.worst_index = k;
    }
    sum += e;
  }
  diag.completeness_residual = max_abs(sum - Matrix::Identity(d, d));
  return diag;
}

class Povm {
 public:
  int dim() const { return static_cast<int>(effects_.front().rows()); }
  std::size_t size() const { return effects_.size(); }
  const Matrix& effect(std::size_t k) const { return effects_.at(k); }
  const std::vector<Matrix>& effects() const { return effects_; }
  const PovmDiagnostics& diagnostics() const { return diag_; }

 private:
  friend Povm validate_povm(const std::vector<Matrix>&, const Tolerances&);
  Povm(std::vector<Matrix> e, PovmDiagnostics d) : effects_(std::move(e)), diag_(d) {}

  std::vector<Matrix> effects_;
  PovmDiagnostics diag_;
};

/// Checks positivity and completeness; effects are stored Hermitized.
inline Povm validate_povm(const std::vector<Matrix>& effects, const Tolerances& tol = {}) {
  const PovmDiagnostics diag = povm_diagnostics(effects);
  if (diag.hermitian_residual > tol.herm) {
    throw Error(ErrorKind::not_hermitian,
                "effect Hermitian residual " + std::to_string(diag.hermitian_residual));
  }
  if (diag.min_eig < -tol.psd) throw NotPsd(diag.worst_index, diag.min_eig);
  if (diag.completeness_residual > tol.complete) throw NotComplete(diag.completeness_residual);
  std::vector<Matrix> stored;
  stored.reserve(effects.size());
  for (const auto& e : effects) stored.push_back(hermitize(e));
  return Povm(std::move(stored), diag);
}

class Rank1Pvm {
 public:
  /// Columns of `basis` are the measurement vectors |psi_k>.
  static Rank1Pvm from_basis(const Matrix& basis, double tol = 1e-10) {
    require_square(basis, "PVM basis");
    const Eigen::Index d = basis.rows();
    const double gram_err = max_abs(basis.adjoint() * basis - Matrix::Identity(d, d));
    if (gram_err > tol) {
      throw Error(ErrorKind::not_orthonormal, "PVM Gram residual " + std::to_string(gram_err));
    }
    return Rank1Pvm(basis);
  }

  static Rank1Pvm computational(int dim) { return Rank1Pvm(Matrix::Identity(dim, dim)); }

  int dim() const { return static_cast<int>(basis_.rows()); }
  const Matrix& basis_matrix() const { return basis_; }
  PureState state(int k) const { return PureState::from_amplitudes(basis_.col(k), 1e-9); }
  Matrix projector(int k) const { return basis_.col(k) * basis_.col(k).adjoint(); }

  /// The ideal measurement as a POVM.
  Povm as_povm() const {
    std::vector<Matrix> e;
    for (int k = 0; k < dim(); ++k) e.push_back(projector(k));
    return validate_povm(e);
  }

 private:
  explicit Rank1Pvm(Matrix b) : basis_(std::move(b)) {}
  Matrix basis_;
};

inline void require_same_dim(int a, int b, const char* what) {
  if (a != b) {
    throw Error(ErrorKind::dim_mismatch, std::string(what) + ": dimensions " + std::to_string(a) +
                                             " and " + std::to_string(b));
  }
}

/// Uhlmann fidelity (tr sqrt(sqrt(a) b sqrt(a)))^2, evaluated as the squared
/// trace norm of sqrt(a) sqrt(b). Inputs are assumed PSD.
inline double state_fidelity(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw Error(ErrorKind::dim_mismatch, "state_fidelity dimensions");
  const Matrix m = psd_sqrt(a) * psd_sqrt(b);
  Eigen::JacobiSVD<Matrix> svd(m);
  if (svd.info() != Eigen::Success) {
    throw Error(ErrorKind::numerical_failure, "SVD did not converge in state_fidelity");
  }
  const double s = svd.singularValues().sum();
  return std::clamp(s * s, 0.0, 1.0);
}

inline double state_fidelity(const DensityMatrix& a, const DensityMatrix& b) {
  require_same_dim(a.dim(), b.dim(), "state_fidelity");
  return state_fidelity(a.matrix(), b.matrix());
}

struct Overlap {
  double value;
  double imag_residual;
};

/// <psi| m |psi> for Hermitian m, with the discarded imaginary part.
inline Overlap overlap_with_residual(const PureState& p, const Matrix& m, double tol_herm = 1e-10) {
  require_square(m, "overlap operator");
  require_same_dim(p.dim(), static_cast<int>(m.rows()), "overlap");
  const double herm = hermitian_residual(m);
  if (herm > tol_herm) {
    throw Error(ErrorKind::not_hermitian, "overlap operator residual " + std::to_string(herm));
  }
  const cplx v = p.amplitudes().dot(m * p.amplitudes());  // dot conjugates the left side
  return {v.real(), std::abs(v.imag())};
}

inline double overlap(const PureState& p, const Matrix& m) {
  return overlap_with_residual(p, m).value;
}

/// Real part of <v|m|v> without validation; for hot loops.
inline double expectation(const Vector& v, const Matrix& m) { return v.dot(m * v).real(); }

}  // namespace measfid
