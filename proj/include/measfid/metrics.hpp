#pragma once

// Average measurement fidelity between an ideal rank-1 PVM and a noisy POVM,
// computed exactly (quadrature for qubits, Monte Carlo for any d), and the
// closed-form lower bounds built from u_k = tr(Pi_k E_k) and, when output
// states are modeled, Q_k = tr(rho_k E_k).

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "measfid/core.hpp"
#include "measfid/device.hpp"
#include "measfid/haar.hpp"

namespace measfid {

enum class IntegrationMethod { quadrature, monte_carlo, closed_form };

inline const char* to_string(IntegrationMethod m) {
  switch (m) {
    case IntegrationMethod::quadrature: return "quadrature";
    case IntegrationMethod::monte_carlo: return "monte_carlo";
    case IntegrationMethod::closed_form: return "closed_form";
  }
  return "unknown";
}

struct FidelityResult {
  double value = 0.0;
  IntegrationMethod method = IntegrationMethod::closed_form;
  double std_err = 0.0;         // Monte Carlo standard error; 0 otherwise
  double error_estimate = 0.0;  // quadrature refinement difference; 0 otherwise
  // sum_k int r_k p_k dpsi, numerically and from the symmetric-subspace identity
  std::optional<double> first_sum;
  std::optional<double> first_sum_analytic;
};

struct AverageError {
  double value = 0.0;
  double std_err = 0.0;
};

/// r = 1 - F.
inline AverageError avg_error(const FidelityResult& f) { return {1.0 - f.value, f.std_err}; }

enum class IntegratorKind { automatic, quadrature, monte_carlo };

/// How to evaluate Haar integrals. `automatic` uses quadrature for d = 2 and
/// Monte Carlo otherwise.
struct Integrator {
  IntegratorKind kind = IntegratorKind::automatic;
  BlochQuadrature quadrature{256, 256};
  std::size_t mc_samples = 1'000'000;
  std::uint64_t seed = 0;
  McOptions mc{};

  bool use_quadrature(int dim) const {
    if (kind == IntegratorKind::quadrature) {
      if (dim != 2) throw Error(ErrorKind::out_of_range, "quadrature integrator requires d = 2");
      return true;
    }
    return kind == IntegratorKind::automatic && dim == 2;
  }
};

struct BoundInputs {
  std::vector<double> u;
  std::optional<std::vector<double>> q;
};

namespace detail {

inline void check_unit_interval(const std::vector<double>& v, const char* name) {
  if (v.empty()) throw Error(ErrorKind::out_of_range, std::string(name) + " is empty");
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(v[i] >= 0.0 && v[i] <= 1.0)) {
      throw Error(ErrorKind::out_of_range, std::string(name) + "[" + std::to_string(i) +
                                               "] = " + std::to_string(v[i]) + " not in [0,1]");
    }
  }
}

/// p_k = |<psi_k|v>|^2 and r_k = <v|E_k|v> (negative rounding clipped).
inline void born_vectors(const Matrix& basis, const Povm& povm, const Vector& v, RealVector& p,
                         RealVector& r) {
  const Vector amps = basis.adjoint() * v;
  p = amps.cwiseAbs2();
  for (std::size_t k = 0; k < povm.size(); ++k) {
    r(static_cast<Eigen::Index>(k)) = std::max(0.0, expectation(v, povm.effect(k)));
  }
}

/// Neumaier-compensated sum of sqrt(v_i).
inline double sum_sqrt(const std::vector<double>& v) {
  double s = 0.0;
  double c = 0.0;
  for (double x : v) {
    const double r = std::sqrt(x);
    const double t = s + r;
    c += std::abs(s) >= r ? (s - t) + r : (r - t) + s;
    s = t;
  }
  return s + c;
}

inline void require_pvm_povm(const Rank1Pvm& pvm, const Povm& povm) {
  require_same_dim(pvm.dim(), povm.dim(), "PVM/POVM");
  if (povm.size() != static_cast<std::size_t>(povm.dim())) {
    throw Error(ErrorKind::dim_mismatch, "POVM must have exactly d effects");
  }
}

}  // namespace detail

/// u_k = tr(Pi_k E_k).
inline std::vector<double> overlaps_u(const Rank1Pvm& pvm, const Povm& povm) {
  detail::require_pvm_povm(pvm, povm);
  std::vector<double> u(povm.size());
  for (int k = 0; k < pvm.dim(); ++k) {
    u[k] = std::clamp(overlap(pvm.state(k), povm.effect(k)), 0.0, 1.0);
  }
  return u;
}

/// (sum_k u_k + d) / (d (d + 1)): exact Haar integral of sum_k r_k p_k.
inline double first_sum_identity(const std::vector<double>& u) {
  const double d = static_cast<double>(u.size());
  double s = 0.0;
  for (double x : u) s += x;
  return (s + d) / (d * (d + 1.0));
}

/// lb = (d + sum_k u_k + sum_{l != m} sqrt(u_l u_m)) / (d (d + 1)).
/// The two sums combine to (sum_l sqrt(u_l))^2, which is summed with
/// compensation so large d keeps full precision.
inline double lower_bound_probs(const BoundInputs& in) {
  detail::check_unit_interval(in.u, "u");
  const double d = static_cast<double>(in.u.size());
  const double s = detail::sum_sqrt(in.u);
  return (d + s * s) / (d * (d + 1.0));
}

/// X-bar = (1/d^2) sum_{l,m} sqrt(u_l u_m) = (sum_l sqrt(u_l))^2 / d^2.
inline double x_bar(const std::vector<double>& u) {
  detail::check_unit_interval(u, "u");
  const double s = detail::sum_sqrt(u);
  const double d = static_cast<double>(u.size());
  return s * s / (d * d);
}

/// (1 + d * mean) / (1 + d), shared by both bound forms and the estimators.
inline double bound_from_mean(double mean, int d) {
  return (1.0 + d * mean) / (1.0 + d);
}

/// lb = (1 + d Z-bar)/(1 + d), Z-bar = (sum_l sqrt(u_l Q_l))^2 / d^2.
inline double lower_bound_states(const BoundInputs& in) {
  detail::check_unit_interval(in.u, "u");
  if (!in.q) throw Error(ErrorKind::out_of_range, "lower_bound_states needs q");
  detail::check_unit_interval(*in.q, "q");
  if (in.q->size() != in.u.size()) throw Error(ErrorKind::dim_mismatch, "u and q lengths differ");
  double s = 0.0;
  for (std::size_t l = 0; l < in.u.size(); ++l) s += std::sqrt(in.u[l] * (*in.q)[l]);
  const int d = static_cast<int>(in.u.size());
  return bound_from_mean(s * s / (static_cast<double>(d) * d), d);
}

/// F-bar = int (sum_k sqrt(p_k r_k))^2 dpsi over Haar-random pure inputs.
/// The first-sum component is checked against its closed form; a mismatch
/// beyond the integrator's error is a NumericalFailure.
inline FidelityResult avg_fidelity_probs(const Rank1Pvm& pvm, const Povm& povm,
                                         const Integrator& integ = {}) {
  detail::require_pvm_povm(pvm, povm);
  const int d = pvm.dim();
  const Matrix& basis = pvm.basis_matrix();
  const double analytic = first_sum_identity(overlaps_u(pvm, povm));

  auto eval = [&](const Vector& v, double& fid, double& first) {
    RealVector p(d);
    RealVector r(d);
    detail::born_vectors(basis, povm, v, p, r);
    double root = 0.0;
    first = 0.0;
    for (int k = 0; k < d; ++k) {
      root += std::sqrt(p(k) * r(k));
      first += p(k) * r(k);
    }
    fid = root * root;
  };

  FidelityResult out;
  out.first_sum_analytic = analytic;
  double allowed = 0.0;
  if (integ.use_quadrature(d)) {
    auto fid_at = [&](double theta, double phi) {
      double f = 0.0;
      double s = 0.0;
      eval(bloch_vector(theta, phi), f, s);
      return f;
    };
    auto first_at = [&](double theta, double phi) {
      double f = 0.0;
      double s = 0.0;
      eval(bloch_vector(theta, phi), f, s);
      return s;
    };
    const QuadratureResult q = bloch_estimate(fid_at, integ.quadrature);
    out.value = q.value;
    out.error_estimate = q.error_estimate;
    out.method = IntegrationMethod::quadrature;
    out.first_sum = integ.quadrature.sum(first_at);
    allowed = 1e-9;
  } else {
    const HaarSampler sampler(d, integ.seed);
    const McVectorResult mc = mc_integrate_vector(
        [&](const PureState& psi, RealVector& o) { eval(psi.amplitudes(), o(0), o(1)); }, sampler,
        integ.mc_samples, 2, integ.mc);
    out.value = mc.mean(0);
    out.std_err = mc.std_err(0);
    out.method = IntegrationMethod::monte_carlo;
    out.first_sum = mc.mean(1);
    allowed = 8.0 * mc.std_err(1) + 1e-12;
  }
  if (std::abs(*out.first_sum - analytic) > allowed) {
    throw Error(ErrorKind::numerical_failure,
                "first-sum cross-check failed: numeric " + std::to_string(*out.first_sum) +
                    " vs analytic " + std::to_string(analytic));
  }
  return out;
}

/// F-bar = int F(sum_k r_k rho_k, sum_k p_k Pi_k) dpsi with the device's
/// input-independent output states rho_k.
inline FidelityResult avg_fidelity_states(const Rank1Pvm& pvm, const NoisyDevice& device,
                                          const Integrator& integ = {}) {
  const Povm& povm = device.povm();
  detail::require_pvm_povm(pvm, povm);
  const std::vector<DensityMatrix>& rho = device.output_states();
  const int d = pvm.dim();
  const Matrix& basis = pvm.basis_matrix();
  std::vector<Matrix> proj;
  for (int k = 0; k < d; ++k) proj.push_back(pvm.projector(k));

  auto fid = [&](const Vector& v) {
    RealVector p(d);
    RealVector r(d);
    detail::born_vectors(basis, povm, v, p, r);
    Matrix noisy = Matrix::Zero(d, d);
    Matrix ideal = Matrix::Zero(d, d);
    for (int k = 0; k < d; ++k) {
      noisy += r(k) * rho[k].matrix();
      ideal += p(k) * proj[k];
    }
    return state_fidelity(noisy, ideal);
  };

  FidelityResult out;
  if (integ.use_quadrature(d)) {
    const QuadratureResult q =
        bloch_estimate([&](double t, double ph) { return fid(bloch_vector(t, ph)); }, integ.quadrature);
    out.value = q.value;
    out.error_estimate = q.error_estimate;
    out.method = IntegrationMethod::quadrature;
  } else {
    const HaarSampler sampler(d, integ.seed);
    const McResult mc =
        mc_integrate([&](const PureState& psi) { return fid(psi.amplitudes()); }, sampler,
                     integ.mc_samples, integ.mc);
    out.value = mc.mean;
    out.std_err = mc.std_err;
    out.method = IntegrationMethod::monte_carlo;
  }
  return out;
}

}  // namespace measfid
