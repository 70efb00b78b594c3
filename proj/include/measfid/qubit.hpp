#pragma once

// Single-qubit validity analysis for the coherent family
//   E0 = [[u0, g], [conj(g), 1 - u0]],  E1 = I - E0,
// measured against the computational basis. Everything here works in the
// frame where g is real and nonnegative; the rotation angle arg(g) is
// reported so callers can map phi back.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <vector>

#include "measfid/core.hpp"
#include "measfid/haar.hpp"
#include "measfid/metrics.hpp"

namespace measfid {

class CoherentQubitPovm {
 public:
  static CoherentQubitPovm make(double u0, cplx gamma) {
    if (!(u0 >= 0.5 && u0 <= 1.0)) {
      throw Error(ErrorKind::out_of_range, "u0 = " + std::to_string(u0) + " not in [1/2, 1]");
    }
    const double r = std::sqrt(u0 * (1.0 - u0));
    if (!(std::abs(gamma) <= r + 1e-12)) {
      throw Error(ErrorKind::out_of_range, "|gamma| = " + std::to_string(std::abs(gamma)) +
                                               " exceeds R_max = " + std::to_string(r));
    }
    // pull rounding overshoot back onto the boundary so E0 stays PSD
    if (std::abs(gamma) > r) gamma = std::polar(r, std::arg(gamma));
    return CoherentQubitPovm(u0, gamma);
  }

  static double r_max(double u0) { return std::sqrt(u0 * (1.0 - u0)); }

  double u0() const { return u0_; }
  cplx gamma() const { return gamma_; }
  double gamma_abs() const { return std::abs(gamma_); }
  double r_max() const { return r_max(u0_); }
  /// arg(gamma); phi in the rotated frame is phi + phase().
  double phase() const { return gamma_ == cplx(0.0) ? 0.0 : std::arg(gamma_); }
  /// tr(E0 Pi1) = tr(E1 Pi0) = 1 - u0.
  double off_weight() const { return 1.0 - u0_; }

  CoherentQubitPovm rotated() const { return CoherentQubitPovm(u0_, cplx(gamma_abs(), 0.0)); }

  std::vector<Matrix> effects() const {
    Matrix e0(2, 2);
    e0 << u0_, gamma_, std::conj(gamma_), 1.0 - u0_;
    return {e0, Matrix::Identity(2, 2) - e0};
  }
  Povm povm() const { return validate_povm(effects()); }

  /// <psi|E0|psi> for psi = bloch_vector(theta, phi).
  double r0(double theta, double phi) const {
    const double c = std::cos(theta / 2.0);
    const double s = std::sin(theta / 2.0);
    return u0_ * c * c + (1.0 - u0_) * s * s + (gamma_ * std::polar(1.0, phi)).real() * std::sin(theta);
  }

 private:
  CoherentQubitPovm(double u0, cplx g) : u0_(u0), gamma_(g) {}
  double u0_;
  cplx gamma_;
};

/// f_{l,m}(psi) - g_{l,m}(psi) with
///   f = sqrt(p_l r_l) sqrt(p_m r_m),  g = sqrt(u_l u_m) p_l p_m,
/// p_k = |<psi_k|psi>|^2, r_k = <psi|E_k|psi>, u_k = tr(Pi_k E_k).
inline double fg_gap(const Rank1Pvm& pvm, const Povm& povm, int l, int m, const PureState& psi) {
  detail::require_pvm_povm(pvm, povm);
  require_same_dim(pvm.dim(), psi.dim(), "fg_gap");
  if (l == m || l < 0 || m < 0 || l >= pvm.dim() || m >= pvm.dim()) {
    throw Error(ErrorKind::out_of_range, "fg_gap needs distinct valid indices");
  }
  const Vector& v = psi.amplitudes();
  const double pl = std::norm(pvm.state(l).amplitudes().dot(v));
  const double pm = std::norm(pvm.state(m).amplitudes().dot(v));
  const double rl = std::max(0.0, expectation(v, povm.effect(l)));
  const double rm = std::max(0.0, expectation(v, povm.effect(m)));
  const double ul = std::clamp(overlap(pvm.state(l), povm.effect(l)), 0.0, 1.0);
  const double um = std::clamp(overlap(pvm.state(m), povm.effect(m)), 0.0, 1.0);
  return std::sqrt(pl * rl) * std::sqrt(pm * rm) - std::sqrt(ul * um) * pl * pm;
}

namespace detail {

/// (f - g)_{0,1} for the qubit family at Bloch angles, closed form.
inline double qubit_gap(const CoherentQubitPovm& e, double theta, double phi) {
  const double c = std::cos(theta / 2.0);
  const double s = std::sin(theta / 2.0);
  const double p0 = c * c;
  const double p1 = s * s;
  const double r0 = std::clamp(e.r0(theta, phi), 0.0, 1.0);
  const double r1 = 1.0 - r0;
  return std::sqrt(p0 * r0 * p1 * r1) - e.u0() * p0 * p1;
}

inline double arccot(double x) { return std::atan2(1.0, x); }

/// <psi|E_j - u0 Pi_j|psi> from r0 = <psi|E0|psi>, without building matrices.
inline double region_value_scalar(const CoherentQubitPovm& e, int j, double theta, double phi) {
  const double c = std::cos(theta / 2.0);
  const double s = std::sin(theta / 2.0);
  const double r0 = e.r0(theta, phi);
  return j == 0 ? r0 - e.u0() * c * c : (1.0 - r0) - e.u0() * s * s;
}

}  // namespace detail

/// <psi|E_j - u_j Pi_j|psi>, evaluated from the effect matrices.
inline double region_value(const CoherentQubitPovm& e, int j, double theta, double phi) {
  if (j != 0 && j != 1) throw Error(ErrorKind::out_of_range, "region index must be 0 or 1");
  const Vector v = bloch_vector(theta, phi);
  const Matrix ej = e.effects()[j];
  const double pj = std::norm(v(j));
  return expectation(v, ej) - e.u0() * pj;
}

/// True when psi(theta, phi) lies in A_j = {<psi|E_j - u_j Pi_j|psi> < 0}.
inline bool region_membership(const CoherentQubitPovm& e, int j, double theta, double phi) {
  return region_value(e, j, theta, phi) < 0.0;
}

/// Analytic envelope of A_j. For j = 0: cos(phi') < 0 and
/// theta <= 2 arccot(-(1-u0)/(2|g| cos phi')); for j = 1 the mirror image
/// with cos(phi') > 0 and pi - theta <= 2 arccot((1-u0)/(2|g| cos phi')).
/// phi' = phi + arg(g).
inline bool envelope_contains(const CoherentQubitPovm& e, int j, double theta, double phi) {
  const double g = e.gamma_abs();
  if (g == 0.0) return false;
  const double cphi = std::cos(phi + e.phase());
  const double c = e.off_weight();
  if (j == 0) {
    if (!(cphi < 0.0)) return false;
    return theta <= 2.0 * detail::arccot(-c / (2.0 * g * cphi));
  }
  if (!(cphi > 0.0)) return false;
  return std::numbers::pi - theta <= 2.0 * detail::arccot(c / (2.0 * g * cphi));
}

struct RegionReport {
  double mu_A0_bound = 0.0;
  double mu_A1_bound = 0.0;
  double mu_A0_measure = 0.0;  // masked quadrature of region_membership
  double mu_A1_measure = 0.0;
  double measure_error = 0.0;  // refinement difference of the masked measures
  double delta0 = 0.0;
  double delta1 = 0.0;
  double lhs = 0.0;  // integral of f - g over the complement of A0 u A1
  double lhs_error = 0.0;
  double full_gap_integral = 0.0;  // integral of f - g over the sphere
  double full_gap_error = 0.0;
  bool sufficient_ok = false;
  double rotated_phase = 0.0;
};

namespace detail {

/// (1/2pi) int_{pi/2}^{3pi/2} h(phi) dphi by Gauss-Legendre.
template <class H>
double half_circle_mean(H&& h, int n) {
  std::vector<double> x;
  std::vector<double> w;
  gauss_legendre(n, x, w);
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const double phi = std::numbers::pi * (1.0 + x[i] / 2.0);
    s += w[i] * h(phi);
  }
  return s * (std::numbers::pi / 2.0) / (2.0 * std::numbers::pi);
}

inline double envelope_measure(double c, double g, int n) {
  if (g == 0.0) return 0.0;
  const double integral = half_circle_mean(
      [&](double phi) { return std::cos(2.0 * arccot(-c / (2.0 * g * std::cos(phi)))); }, n);
  return 0.25 - integral / 2.0;
}

inline double delta_term(double u0, double c, double g, int n) {
  if (g == 0.0) return 0.0;
  const double a = c / (2.0 * g);
  const double mean = half_circle_mean(
      [&](double phi) {
        const double c2 = std::cos(phi) * std::cos(phi);
        const double s = c2 / (c2 + a * a);
        return s * s;
      },
      n);
  return u0 * mean;  // sqrt(u0 u1) with u1 = u0
}

}  // namespace detail

/// Envelope bounds on mu(A_j) plus masked-quadrature measures of the true sets.
inline RegionReport measure_bounds(const CoherentQubitPovm& povm, const BlochQuadrature& quad) {
  const CoherentQubitPovm e = povm.rotated();
  RegionReport rep;
  rep.rotated_phase = povm.phase();
  const int n = std::max(quad.n_phi(), 64);
  rep.mu_A0_bound = detail::envelope_measure(e.off_weight(), e.gamma_abs(), n);
  rep.mu_A1_bound = detail::envelope_measure(e.off_weight(), e.gamma_abs(), n);
  auto mask = [&](int j) {
    return bloch_estimate([&](double t, double p) { return detail::region_value_scalar(e, j, t, p) < 0.0 ? 1.0 : 0.0; },
                          quad);
  };
  const QuadratureResult m0 = mask(0);
  const QuadratureResult m1 = mask(1);
  rep.mu_A0_measure = m0.value;
  rep.mu_A1_measure = m1.value;
  rep.measure_error = std::max(m0.error_estimate, m1.error_estimate);
  return rep;
}

/// Checks int_{(A0 u A1)^c} (f - g) >= delta0 + delta1, the qubit sufficient
/// condition for the lower bound. The complement is masked node by node.
inline RegionReport sufficient_condition(const CoherentQubitPovm& povm, const BlochQuadrature& quad) {
  RegionReport rep = measure_bounds(povm, quad);
  const CoherentQubitPovm e = povm.rotated();
  const int n = std::max(quad.n_phi(), 64);
  rep.delta0 = detail::delta_term(e.u0(), e.off_weight(), e.gamma_abs(), n);
  rep.delta1 = detail::delta_term(e.u0(), e.off_weight(), e.gamma_abs(), n);
  const QuadratureResult lhs = bloch_estimate(
      [&](double t, double p) {
        if (detail::region_value_scalar(e, 0, t, p) < 0.0 || detail::region_value_scalar(e, 1, t, p) < 0.0) {
          return 0.0;
        }
        return detail::qubit_gap(e, t, p);
      },
      quad);
  rep.lhs = lhs.value;
  rep.lhs_error = lhs.error_estimate;
  const QuadratureResult full =
      bloch_estimate([&](double t, double p) { return detail::qubit_gap(e, t, p); }, quad);
  rep.full_gap_integral = full.value;
  rep.full_gap_error = full.error_estimate;
  rep.sufficient_ok = rep.lhs >= rep.delta0 + rep.delta1;
  return rep;
}

/// Exact average fidelity of the family against the computational basis.
inline QuadratureResult exact_fidelity_qubit(const CoherentQubitPovm& e, const BlochQuadrature& quad) {
  return bloch_estimate(
      [&](double theta, double phi) {
        const double c = std::cos(theta / 2.0);
        const double s = std::sin(theta / 2.0);
        const double r0 = std::clamp(e.r0(theta, phi), 0.0, 1.0);
        const double root = std::abs(c) * std::sqrt(r0) + std::abs(s) * std::sqrt(1.0 - r0);
        return root * root;
      },
      quad);
}

/// (1 + 2 u0)/3, the d = 2 closed-form bound with u = (u0, u0).
inline double qubit_lower_bound(double u0) { return lower_bound_probs({{u0, u0}, std::nullopt}); }

struct SweepRow {
  double u0 = 0.0;
  double gamma_abs = 0.0;
  double F_exact = 0.0;
  double lb = 0.0;
  double ub = 0.0;
  double gap = 0.0;
  double quad_error = 0.0;
};

/// Evenly spaced |g| on [0, R_max], endpoints included.
inline std::vector<double> gamma_grid(double u0, int points) {
  if (points < 1) throw Error(ErrorKind::out_of_range, "gamma_points must be >= 1");
  const double r = CoherentQubitPovm::r_max(u0);
  std::vector<double> g(points, 0.0);
  for (int i = 0; i < points; ++i) g[i] = points == 1 ? 0.0 : r * i / (points - 1);
  if (points > 1) g.back() = r;
  return g;
}

/// Exact F-bar, lb, ub = 1 - lb and gap F - lb for each u0 and each |g| on
/// the grid, with g = |g| e^{i phase}. Rows come out in (u0, g) order
/// regardless of thread count.
inline std::vector<SweepRow> sweep_table1(const BlochQuadrature& quad, const std::vector<double>& u0s,
                                          int gamma_points, double phase = 0.0, unsigned threads = 0) {
  struct Job {
    double u0;
    double g;
  };
  std::vector<Job> jobs;
  for (double u0 : u0s) {
    if (!(u0 >= 0.5 && u0 < 1.0)) {
      throw Error(ErrorKind::out_of_range, "sweep u0 = " + std::to_string(u0) + " not in [1/2, 1)");
    }
    for (double g : gamma_grid(u0, gamma_points)) jobs.push_back({u0, g});
  }
  std::vector<SweepRow> rows(jobs.size());
  detail::parallel_for(jobs.size(), threads, [&](std::size_t i) {
    const Job& j = jobs[i];
    const CoherentQubitPovm e = CoherentQubitPovm::make(j.u0, std::polar(j.g, phase));
    const QuadratureResult q = exact_fidelity_qubit(e, quad);
    SweepRow& r = rows[i];
    r.u0 = j.u0;
    r.gamma_abs = j.g;
    r.F_exact = q.value;
    r.lb = qubit_lower_bound(j.u0);
    r.ub = 1.0 - r.lb;
    r.gap = r.F_exact - r.lb;
    r.quad_error = q.error_estimate;
  });
  return rows;
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "u0,gamma_abs,F_exact,lb,ub,gap\n";
  char buf[256];
  for (const SweepRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%.12g,%.12g,%.12g,%.12g,%.12g,%.12g\n", r.u0, r.gamma_abs, r.F_exact,
                  r.lb, r.ub, r.gap);
    os << buf;
  }
}

struct ScanPoint {
  double u0 = 0.0;
  double gamma_abs = 0.0;
  double gap = 0.0;
  double tol = 0.0;
};

struct ScanResult {
  std::vector<ScanPoint> violations;
  double max_negative_gap = 0.0;  // most negative gap seen, 0 if none
  double min_gap = 0.0;
  std::size_t points = 0;
};

/// Scan tolerance: five times the quadrature error estimate, floored at
/// 1e-12 for floating-point round-off.
inline double scan_tolerance(double quad_error) { return std::max(5.0 * quad_error, 1e-12); }

/// Flags every (u0, g) with F_exact < lb - tol.
inline ScanResult violation_scan(const std::vector<double>& u0_grid, int gamma_points,
                                 const BlochQuadrature& quad, unsigned threads = 0) {
  const std::vector<SweepRow> rows = sweep_table1(quad, u0_grid, gamma_points, 0.0, threads);
  ScanResult out;
  out.points = rows.size();
  out.min_gap = rows.empty() ? 0.0 : rows.front().gap;
  for (const SweepRow& r : rows) {
    out.min_gap = std::min(out.min_gap, r.gap);
    out.max_negative_gap = std::min(out.max_negative_gap, r.gap);
    const double tol = scan_tolerance(r.quad_error);
    if (r.gap < -tol) out.violations.push_back({r.u0, r.gamma_abs, r.gap, tol});
  }
  return out;
}

/// u0 from lo to hi inclusive in `step` increments, rounded to the step grid.
inline std::vector<double> u0_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || hi < lo) throw Error(ErrorKind::out_of_range, "bad u0 grid");
  const auto n = static_cast<std::int64_t>(std::floor((hi - lo) / step + 1e-9));
  std::vector<double> g;
  for (std::int64_t i = 0; i <= n; ++i) g.push_back(lo + static_cast<double>(i) * step);
  return g;
}

}  // namespace measfid
