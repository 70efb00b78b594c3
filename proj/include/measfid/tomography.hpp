#pragma once

// Full reconstruction of the noisy POVM from d^2 probe states: the d basis
// states |psi_j>, and for each i < j the superpositions
// (|psi_i> + |psi_j>)/sqrt(2) and (|psi_i> + i|psi_j>)/sqrt(2).
// It needs d^3 outcome probabilities and is the cost baseline the sampling
// protocols are compared against.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "measfid/core.hpp"
#include "measfid/device.hpp"

namespace measfid {

enum class ProbeKind { basis, plus, minus };

struct ProbeState {
  ProbeKind kind = ProbeKind::basis;
  int i = 0;
  int j = 0;  // equals i for basis probes
  PureState state;
};

class TomographyPlan {
 public:
  TomographyPlan(const Rank1Pvm& pvm, std::uint64_t shots_per_state, double lambda = 1.0)
      : pvm_(pvm), shots_(shots_per_state), lambda_(lambda) {
    if (!(lambda >= 0.0)) throw Error(ErrorKind::out_of_range, "lambda must be >= 0");
    const int d = pvm.dim();
    const Matrix& b = pvm.basis_matrix();
    const double s = std::numbers::sqrt2 / 2.0;
    for (int j = 0; j < d; ++j) probes_.push_back({ProbeKind::basis, j, j, pvm.state(j)});
    for (int i = 0; i < d; ++i) {
      for (int j = i + 1; j < d; ++j) {
        probes_.push_back({ProbeKind::plus, i, j,
                           PureState::from_amplitudes(s * (b.col(i) + b.col(j)), 1e-9)});
        probes_.push_back({ProbeKind::minus, i, j,
                           PureState::from_amplitudes(s * (b.col(i) + cplx(0, 1) * b.col(j)), 1e-9)});
      }
    }
  }

  int dim() const { return pvm_.dim(); }
  const Rank1Pvm& pvm() const { return pvm_; }
  std::uint64_t shots_per_state() const { return shots_; }
  double lambda() const { return lambda_; }
  const std::vector<ProbeState>& probes() const { return probes_; }

 private:
  Rank1Pvm pvm_;
  std::uint64_t shots_;
  double lambda_;
  std::vector<ProbeState> probes_;
};

struct TomographyCost {
  std::uint64_t states = 0;
  std::uint64_t probabilities = 0;
  std::uint64_t total_shots = 0;
};

inline TomographyCost cost_model(int d, std::uint64_t shots_per_state) {
  if (d < 1) throw Error(ErrorKind::out_of_range, "dimension must be >= 1");
  const auto dd = static_cast<std::uint64_t>(d);
  return {dd * dd, dd * dd * dd, dd * dd * shots_per_state};
}

struct ReconstructionDiagnostics {
  double hermitize_residual = 0.0;
  std::uint64_t negative_eigs_clipped = 0;
  double most_negative_eig = 0.0;
  double completeness_residual_raw = 0.0;
  double completeness_residual = 0.0;  // after projection
  bool used_additive_correction = false;
};

struct ReconstructedPovm {
  std::vector<Matrix> raw;            // assembled effects, before projection
  std::optional<Povm> projected;      // nearest valid POVM after post-processing
  ReconstructionDiagnostics diagnostics;
  std::vector<std::vector<double>> probabilities;  // [probe][outcome]
  std::uint64_t total_shots = 0;
};

namespace detail {

/// Effects from probe statistics. In the PVM basis,
///   B_k(j, j) = P(k | psi_j)
///   B_k(j, i) = P(k | plus_ij) + i P(k | minus_ij) - (1 + i)/2 (B_k(i,i) + B_k(j,j))
/// which follows from |psi_i><psi_j| expanded over the probe projectors;
/// B_k(i, j) is its conjugate.
inline std::vector<Matrix> assemble_effects(const TomographyPlan& plan,
                                            const std::vector<std::vector<double>>& prob) {
  const int d = plan.dim();
  const auto& probes = plan.probes();
  std::vector<Matrix> effects(d, Matrix::Zero(d, d));
  std::vector<std::vector<int>> plus_at(d, std::vector<int>(d, -1));
  std::vector<std::vector<int>> minus_at(d, std::vector<int>(d, -1));
  for (std::size_t p = 0; p < probes.size(); ++p) {
    const ProbeState& s = probes[p];
    if (s.kind == ProbeKind::plus) plus_at[s.i][s.j] = static_cast<int>(p);
    if (s.kind == ProbeKind::minus) minus_at[s.i][s.j] = static_cast<int>(p);
  }
  const cplx half_one_plus_i(0.5, 0.5);
  for (int k = 0; k < d; ++k) {
    Matrix b = Matrix::Zero(d, d);
    for (int j = 0; j < d; ++j) b(j, j) = prob[j][k];
    for (int i = 0; i < d; ++i) {
      for (int j = i + 1; j < d; ++j) {
        const cplx v = prob[plus_at[i][j]][k] + cplx(0, 1) * prob[minus_at[i][j]][k] -
                       half_one_plus_i * (b(i, i) + b(j, j));
        b(j, i) = v;
        b(i, j) = std::conj(v);
      }
    }
    const Matrix& V = plan.pvm().basis_matrix();
    effects[k] = V * b * V.adjoint();
  }
  return effects;
}

/// Hermitize, clip negative eigenvalues, then restore completeness with
/// E_k <- S^{-1/2} E_k S^{-1/2} (S = sum E_k) when S is positive definite,
/// else E_k <- E_k + (1 - S)/d.
inline void project_to_povm(ReconstructedPovm& rec, const Tolerances& tol) {
  const std::size_t n = rec.raw.size();
  const Eigen::Index d = rec.raw.front().rows();
  const Matrix id = Matrix::Identity(d, d);
  ReconstructionDiagnostics& diag = rec.diagnostics;
  Matrix raw_sum = Matrix::Zero(d, d);
  for (const auto& e : rec.raw) raw_sum += e;
  diag.completeness_residual_raw = max_abs(raw_sum - id);

  std::vector<Matrix> eff;
  for (const auto& e : rec.raw) {
    diag.hermitize_residual = std::max(diag.hermitize_residual, hermitian_residual(e));
    eff.push_back(spectral_apply(e, [&](double lam) {
      if (lam < 0.0) {
        ++diag.negative_eigs_clipped;
        diag.most_negative_eig = std::min(diag.most_negative_eig, lam);
        return 0.0;
      }
      return lam;
    }));
  }
  Matrix sum = Matrix::Zero(d, d);
  for (const auto& e : eff) sum += e;
  const Eigensystem es = eigh(sum);
  if (es.values(0) > 1e-12) {
    RealVector inv_root = es.values.cwiseSqrt().cwiseInverse();
    const Matrix s_inv_half = es.vectors * inv_root.cast<cplx>().asDiagonal() * es.vectors.adjoint();
    for (auto& e : eff) e = hermitize(s_inv_half * e * s_inv_half);
  } else {
    diag.used_additive_correction = true;
    const Matrix corr = (id - sum) / static_cast<double>(n);
    for (auto& e : eff) e = hermitize(e + corr);
  }
  Matrix post = Matrix::Zero(d, d);
  for (const auto& e : eff) post += e;
  diag.completeness_residual = max_abs(post - id);
  if (diag.completeness_residual > std::max(10.0 * diag.completeness_residual_raw, tol.complete)) {
    throw Error(ErrorKind::projection_failed,
                "completeness residual grew from " + std::to_string(diag.completeness_residual_raw) +
                    " to " + std::to_string(diag.completeness_residual));
  }
  try {
    rec.projected = validate_povm(eff, tol);
  } catch (const Error& e) {
    throw Error(ErrorKind::projection_failed, std::string("projected effects invalid: ") + e.what());
  }
}

inline ReconstructedPovm finish(const TomographyPlan& plan, std::vector<std::vector<double>> prob,
                                std::uint64_t shots, const Tolerances& tol) {
  ReconstructedPovm rec;
  rec.probabilities = std::move(prob);
  rec.total_shots = shots;
  rec.raw = assemble_effects(plan, rec.probabilities);
  project_to_povm(rec, tol);
  return rec;
}

}  // namespace detail

/// Sampled reconstruction: shots_per_state measurements per probe, outcome
/// frequencies smoothed as (n_k + lambda)/(N + d lambda).
inline ReconstructedPovm reconstruct(NoisyDevice& dev, const TomographyPlan& plan,
                                     const Tolerances& tol = {}) {
  require_same_dim(dev.dim(), plan.dim(), "tomography");
  if (dev.povm().size() != static_cast<std::size_t>(dev.dim())) {
    throw Error(ErrorKind::dim_mismatch, "tomography expects d outcomes");
  }
  const int d = plan.dim();
  const std::uint64_t before = dev.shots();
  std::vector<std::vector<double>> prob;
  for (const ProbeState& s : plan.probes()) {
    const auto counts = dev.sample_counts(DensityMatrix::pure(s.state), plan.shots_per_state());
    const double denom = static_cast<double>(plan.shots_per_state()) + d * plan.lambda();
    if (denom <= 0.0) throw Error(ErrorKind::zero_trials, "no shots and no smoothing");
    std::vector<double> row(d);
    for (int k = 0; k < d; ++k) row[k] = (static_cast<double>(counts[k]) + plan.lambda()) / denom;
    prob.push_back(std::move(row));
  }
  return detail::finish(plan, std::move(prob), dev.shots() - before, tol);
}

/// Oracle reconstruction from exact probabilities tr(E_k |phi><phi|).
inline ReconstructedPovm reconstruct_exact(const Povm& povm, const TomographyPlan& plan,
                                           const Tolerances& tol = {}) {
  require_same_dim(povm.dim(), plan.dim(), "tomography");
  std::vector<std::vector<double>> prob;
  for (const ProbeState& s : plan.probes()) {
    std::vector<double> row(povm.size());
    for (std::size_t k = 0; k < povm.size(); ++k) row[k] = expectation(s.state.amplitudes(), povm.effect(k));
    prob.push_back(std::move(row));
  }
  return detail::finish(plan, std::move(prob), 0, tol);
}

}  // namespace measfid
