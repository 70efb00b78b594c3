#pragma once

// Haar-random pure states, Monte Carlo integration over them, Bloch-sphere
// product quadrature for qubits, and the two-copy symmetric projector.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <numbers>
#include <random>
#include <thread>
#include <utility>
#include <vector>

#include "measfid/core.hpp"

namespace measfid {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Engine keyed by (seed, stream). Distinct streams give independent-looking
/// sequences; equal keys give identical ones.
inline std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

class HaarSampler {
 public:
  HaarSampler(int dim, std::uint64_t seed, std::uint64_t stream_id = 0)
      : dim_(dim), seed_(seed), stream_(stream_id), engine_(make_engine(seed, stream_id)) {
    if (dim < 2) throw Error(ErrorKind::out_of_range, "HaarSampler needs dim >= 2");
  }

  int dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }

  /// Independent sampler for chunk `index` of this stream.
  HaarSampler substream(std::uint64_t index) const {
    return HaarSampler(dim_, seed_, splitmix64(stream_ ^ splitmix64(index + 1)));
  }

  /// Normalized vector of i.i.d. standard complex Gaussians.
  Vector sample_amplitudes() {
    Vector v(dim_);
    for (int i = 0; i < dim_; ++i) {
      const double re = normal_(engine_);
      const double im = normal_(engine_);
      v(i) = cplx(re, im);
    }
    return v / v.norm();
  }

  PureState sample() { return PureState::normalized(sample_amplitudes()); }

 private:
  int dim_;
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

inline PureState sample_pure(HaarSampler& s) { return s.sample(); }

/// (1 (x) 1 + SWAP)/2 on C^d (x) C^d, basis index a*d + b.
inline Matrix sym_projector(int d) {
  if (d < 2) throw Error(ErrorKind::out_of_range, "sym_projector needs d >= 2");
  const int n = d * d;
  Matrix p = Matrix::Zero(n, n);
  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < d; ++b) {
      p(a * d + b, a * d + b) += 0.5;
      p(b * d + a, a * d + b) += 0.5;
    }
  }
  return p;
}

struct McOptions {
  unsigned threads = 0;           // 0: hardware concurrency
  std::size_t chunk_size = 4096;  // samples per sub-stream; fixes the result
};

struct McResult {
  double mean = 0.0;
  double std_err = 0.0;
  std::size_t n = 0;
};

struct McVectorResult {
  RealVector mean;
  RealVector std_err;
  std::size_t n = 0;
};

namespace detail {

struct Moments {
  std::size_t n = 0;
  RealVector mean;
  RealVector m2;
};

inline void merge_into(Moments& acc, const Moments& c) {
  if (c.n == 0) return;
  if (acc.n == 0) {
    acc = c;
    return;
  }
  const double na = static_cast<double>(acc.n);
  const double nb = static_cast<double>(c.n);
  const double nt = na + nb;
  const RealVector delta = c.mean - acc.mean;
  acc.mean += delta * (nb / nt);
  acc.m2 += c.m2 + delta.cwiseProduct(delta) * (na * nb / nt);
  acc.n += c.n;
}

inline unsigned resolve_threads(unsigned requested, std::size_t jobs) {
  unsigned t = requested == 0 ? std::max(1u, std::thread::hardware_concurrency()) : requested;
  return static_cast<unsigned>(std::min<std::size_t>(t, std::max<std::size_t>(jobs, 1)));
}

/// Runs job(i) for i in [0, jobs) over up to `threads` workers. The first
/// exception (lowest job index) is rethrown.
template <class Job>
void parallel_for(std::size_t jobs, unsigned threads, Job&& job) {
  const unsigned workers = resolve_threads(threads, jobs);
  if (workers <= 1) {
    for (std::size_t i = 0; i < jobs; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(jobs);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < jobs; i = next++) {
        try {
          job(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

template <class Eval>
McVectorResult chunked_mc(const HaarSampler& sampler, std::size_t n, Eigen::Index out_size,
                          const McOptions& opts, Eval&& eval) {
  if (n < 2) throw Error(ErrorKind::out_of_range, "Monte Carlo needs n >= 2");
  const std::size_t chunk = std::max<std::size_t>(opts.chunk_size, 1);
  const std::size_t chunks = (n + chunk - 1) / chunk;
  std::vector<Moments> parts(chunks);
  parallel_for(chunks, opts.threads, [&](std::size_t c) {
    HaarSampler local = sampler.substream(c);
    const std::size_t begin = c * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    Moments m;
    m.mean = RealVector::Zero(out_size);
    m.m2 = RealVector::Zero(out_size);
    RealVector value(out_size);
    for (std::size_t i = begin; i < end; ++i) {
      const PureState psi = local.sample();
      try {
        eval(psi, value);
      } catch (const Error& e) {
        throw Error(e.kind(), "sample " + std::to_string(i) + ": " + e.what());
      } catch (const std::exception& e) {
        throw Error(ErrorKind::numerical_failure, "sample " + std::to_string(i) + ": " + e.what());
      }
      ++m.n;
      const RealVector delta = value - m.mean;
      m.mean += delta / static_cast<double>(m.n);
      m.m2 += delta.cwiseProduct(value - m.mean);
    }
    parts[c] = std::move(m);
  });
  Moments total;
  for (const auto& p : parts) merge_into(total, p);
  McVectorResult r;
  r.n = total.n;
  r.mean = total.mean;
  r.std_err = (total.m2 / static_cast<double>(total.n - 1)).cwiseSqrt() /
              std::sqrt(static_cast<double>(total.n));
  return r;
}

}  // namespace detail

/// Sample mean and standard error of f over n Haar-random states. The result
/// depends on (seed, stream_id, n, chunk_size) only, never on thread count.
template <class F>
McResult mc_integrate(F&& f, const HaarSampler& sampler, std::size_t n, const McOptions& opts = {}) {
  const McVectorResult v = detail::chunked_mc(
      sampler, n, 1, opts, [&](const PureState& psi, RealVector& out) { out(0) = f(psi); });
  return {v.mean(0), v.std_err(0), v.n};
}

/// Vector-valued variant; f(psi, out) fills `out` of length out_size.
template <class F>
McVectorResult mc_integrate_vector(F&& f, const HaarSampler& sampler, std::size_t n,
                                   Eigen::Index out_size, const McOptions& opts = {}) {
  return detail::chunked_mc(sampler, n, out_size, opts, std::forward<F>(f));
}

// ---------------------------------------------------------------------------
// Bloch sphere quadrature

/// n-point Gauss-Legendre nodes and weights on [-1, 1].
inline void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  // P_n(x) and P_n'(x) by the three-term recurrence
  auto legendre = [n](double x) {
    double p0 = 1.0;
    double p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = pk;
    }
    return std::pair{p1, n * (x * p1 - p0) / (x * x - 1.0)};
  };
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    for (int iter = 0; iter < 100; ++iter) {
      const auto [p, dp] = legendre(x);
      const double dx = p / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double dp = legendre(x).second;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    nodes[i] = -x;
    nodes[n - 1 - i] = x;
    weights[i] = w;
    weights[n - 1 - i] = w;
  }
}

/// Product rule for (1/4pi) int f(theta, phi) sin(theta) dtheta dphi:
/// Gauss-Legendre in theta on [0, pi] carrying the sin(theta) density, and
/// the periodic trapezoid rule in phi.
class BlochQuadrature {
 public:
  explicit BlochQuadrature(int n_theta = 256, int n_phi = 256) : n_theta_(n_theta), n_phi_(n_phi) {
    if (n_theta < 1 || n_phi < 1) throw Error(ErrorKind::out_of_range, "quadrature node counts");
    std::vector<double> x;
    std::vector<double> w;
    gauss_legendre(n_theta, x, w);
    theta_.resize(n_theta);
    theta_w_.resize(n_theta);
    for (int i = 0; i < n_theta; ++i) {
      theta_[i] = std::numbers::pi / 2.0 * (x[i] + 1.0);
      theta_w_[i] = w[i] * (std::numbers::pi / 2.0) * std::sin(theta_[i]) / 2.0;
    }
    phi_.resize(n_phi);
    for (int j = 0; j < n_phi; ++j) phi_[j] = 2.0 * std::numbers::pi * j / n_phi;
  }

  int n_theta() const { return n_theta_; }
  int n_phi() const { return n_phi_; }
  const std::vector<double>& theta() const { return theta_; }
  const std::vector<double>& phi() const { return phi_; }
  double theta_weight(int i) const { return theta_w_[i]; }
  double phi_weight() const { return 1.0 / n_phi_; }
  double weight(int i, int /*j*/) const { return theta_w_[i] / n_phi_; }

  double weight_sum() const {
    double s = 0.0;
    for (double w : theta_w_) s += w;
    return s;
  }

  BlochQuadrature refined() const { return BlochQuadrature(2 * n_theta_, 2 * n_phi_); }

  /// Single-level quadrature sum of f(theta, phi).
  template <class F>
  double sum(F&& f) const {
    double total = 0.0;
    for (int i = 0; i < n_theta_; ++i) {
      double row = 0.0;
      for (int j = 0; j < n_phi_; ++j) row += f(theta_[i], phi_[j]);
      total += theta_w_[i] * row;
    }
    return total / n_phi_;
  }

 private:
  int n_theta_;
  int n_phi_;
  std::vector<double> theta_;
  std::vector<double> theta_w_;
  std::vector<double> phi_;
};

/// cos(theta/2)|0> + e^{i phi} sin(theta/2)|1>
inline Vector bloch_vector(double theta, double phi) {
  Vector v(2);
  v(0) = std::cos(theta / 2.0);
  v(1) = std::polar(std::sin(theta / 2.0), phi);
  return v;
}

struct QuadratureResult {
  double value = 0.0;
  double error_estimate = 0.0;  // |I(refined) - I(previous)|
  int n_theta = 0;
  int n_phi = 0;
};

struct BlochOptions {
  double tol = 1e-8;
  int max_levels = 3;  // refinement doublings allowed beyond the first
};

/// Value at q.refined() with the one-doubling difference as error estimate.
template <class F>
QuadratureResult bloch_estimate(F&& f, const BlochQuadrature& q) {
  const double coarse = q.sum(f);
  const BlochQuadrature fine = q.refined();
  const double v = fine.sum(f);
  return {v, std::abs(v - coarse), fine.n_theta(), fine.n_phi()};
}

/// Adaptive Bloch-sphere integral: doubles the node counts until successive
/// levels agree within opts.tol, else throws NonConvergent.
template <class F>
QuadratureResult bloch_integrate(F&& f, const BlochQuadrature& q, const BlochOptions& opts = {}) {
  double prev = q.sum(f);
  BlochQuadrature cur = q;
  double diff = 0.0;
  for (int level = 0; level <= opts.max_levels; ++level) {
    cur = cur.refined();
    const double v = cur.sum(f);
    diff = std::abs(v - prev);
    if (diff < opts.tol) return {v, diff, cur.n_theta(), cur.n_phi()};
    prev = v;
  }
  throw Error(ErrorKind::non_convergent,
              "Bloch quadrature did not stabilize; last difference " + std::to_string(diff));
}

}  // namespace measfid
