#pragma once

// Sampling protocols that estimate the lower bounds from device shots alone,
// plus the trial-count formulas (Chebyshev for per-index estimates, Hoeffding
// for the number of sampled index pairs) and Laplace-smoothed estimates.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "measfid/core.hpp"
#include "measfid/device.hpp"
#include "measfid/metrics.hpp"

namespace measfid {

/// How per-index estimates are shared between sampled pairs.
enum class IndexEstimation {
  per_pair,  // every pair gets fresh estimates for both of its indices
  cached,    // one estimate per index, reused by every pair that draws it
};

struct EstimationConfig {
  double epsilon = 0.01;
  double delta = 0.05;
  double lambda = 1.0;
  std::uint64_t seed = 0;
  double u_guess = 0.99;
  double q_guess = 0.99;
  bool conservative = false;  // plan trial counts at maximum variance, u = 1/2
  double range_lo = 0.0;      // range [a, b] of the pair statistic for Hoeffding
  double range_hi = 1.0;
  bool exhaustive_pairs = false;     // enumerate all d^2 pairs instead of sampling K
  bool exact_probabilities = false;  // oracle mode: use tr(...) instead of shots
  IndexEstimation estimation = IndexEstimation::per_pair;
  std::uint64_t max_shots_per_estimate = 1'000'000'000;

  void validate() const {
    if (!(epsilon > 0.0)) throw Error(ErrorKind::out_of_range, "epsilon must be > 0");
    if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorKind::out_of_range, "delta must be in (0,1)");
    if (!(lambda >= 0.0)) throw Error(ErrorKind::out_of_range, "lambda must be >= 0");
    if (!(u_guess >= 0.0 && u_guess <= 1.0) || !(q_guess >= 0.0 && q_guess <= 1.0)) {
      throw Error(ErrorKind::out_of_range, "trial-count guesses must be in [0,1]");
    }
    if (!(range_lo >= 0.0 && range_lo <= range_hi && range_hi <= 1.0)) {
      throw Error(ErrorKind::out_of_range, "pair range must satisfy 0 <= a <= b <= 1");
    }
  }
};

namespace detail {

/// ceil(x), except values within relative 1e-9 of an integer round to it so
/// that representation error in products like 0.99 * 0.01 cannot add a trial.
inline std::uint64_t ceil_count(double x) {
  if (x <= 0.0) return 0;
  const double r = std::round(x);
  if (std::abs(x - r) <= 1e-9 * std::max(1.0, x)) return static_cast<std::uint64_t>(r);
  return static_cast<std::uint64_t>(std::ceil(x));
}

}  // namespace detail

/// Smallest integer j >= 1 with 1/j^2 <= delta.
inline std::uint64_t chebyshev_multiplier(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorKind::out_of_range, "delta must be in (0,1)");
  auto ok = [delta](std::uint64_t j) { return 1.0 / (static_cast<double>(j) * j) <= delta; };
  std::uint64_t j = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(1.0 / std::sqrt(delta))));
  while (j > 1 && ok(j - 1)) --j;
  while (!ok(j)) ++j;
  return j;
}

/// N = ceil(j_delta^2 u (1 - u) / epsilon^2).
inline std::uint64_t chebyshev_trials(double epsilon, double delta, double u_guess) {
  if (!(epsilon > 0.0)) throw Error(ErrorKind::out_of_range, "epsilon must be > 0");
  if (!(u_guess >= 0.0 && u_guess <= 1.0)) throw Error(ErrorKind::out_of_range, "u_guess not in [0,1]");
  const double j = static_cast<double>(chebyshev_multiplier(delta));
  return detail::ceil_count(j * j * u_guess * (1.0 - u_guess) / (epsilon * epsilon));
}

inline std::uint64_t chebyshev_trials(const EstimationConfig& cfg, double u_guess) {
  return chebyshev_trials(cfg.epsilon, cfg.delta, u_guess);
}

/// ln(2/delta) (b - a)^2 / (2 epsilon^2), before rounding up.
inline double hoeffding_bound(double epsilon, double delta, double a, double b) {
  if (!(epsilon > 0.0)) throw Error(ErrorKind::out_of_range, "epsilon must be > 0");
  if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorKind::out_of_range, "delta must be in (0,1)");
  if (!(a <= b)) throw Error(ErrorKind::out_of_range, "range needs a <= b");
  return std::log(2.0 / delta) * (b - a) * (b - a) / (2.0 * epsilon * epsilon);
}

inline std::uint64_t hoeffding_pairs(double epsilon, double delta, double a, double b) {
  return detail::ceil_count(hoeffding_bound(epsilon, delta, a, b));
}

inline std::uint64_t hoeffding_pairs(const EstimationConfig& cfg) {
  return hoeffding_pairs(cfg.epsilon, cfg.delta, cfg.range_lo, cfg.range_hi);
}

/// (n + lambda) / (N + 2 lambda); lambda = 0 is the plain frequency.
inline double laplace_estimate(std::uint64_t successes, std::uint64_t trials, double lambda) {
  if (successes > trials) throw Error(ErrorKind::out_of_range, "successes exceed trials");
  if (!(lambda >= 0.0)) throw Error(ErrorKind::out_of_range, "lambda must be >= 0");
  if (trials == 0 && lambda == 0.0) throw Error(ErrorKind::zero_trials, "no trials and no smoothing");
  return (static_cast<double>(successes) + lambda) / (static_cast<double>(trials) + 2.0 * lambda);
}

/// Shot totals for one index, summed over every estimate made for it.
struct IndexStats {
  std::uint64_t estimates = 0;
  std::uint64_t n_trials = 0;
  std::uint64_t successes = 0;
  double u_hat = 0.0;  // pooled smoothed estimate over all trials
  std::uint64_t q_trials = 0;
  std::uint64_t q_successes = 0;
  std::optional<double> q_hat;
};

struct TrialAccounting {
  std::uint64_t n1 = 0;                // first-measurement trials per estimate
  std::optional<std::uint64_t> n2;     // conditioned repeats required per estimate
  std::optional<std::uint64_t> m2_max; // largest first-measurement count needed to reach n2
  std::uint64_t total_shots = 0;       // device shots consumed by the run
};

struct ProtocolReport {
  double lb_hat = 0.0;
  std::map<int, IndexStats> per_index;
  std::uint64_t K = 0;
  std::vector<std::pair<int, int>> pairs;
  EstimationConfig config;
  TrialAccounting trial_accounting;
  int dim = 0;
  bool with_output_states = false;
  std::uint64_t device_seed = 0;
  std::uint64_t device_stream = 0;
};

namespace detail {

inline std::vector<std::pair<int, int>> draw_pairs(int d, const EstimationConfig& cfg) {
  std::vector<std::pair<int, int>> pairs;
  if (cfg.exhaustive_pairs) {
    if (d > 64) throw Error(ErrorKind::out_of_range, "exhaustive pairs limited to d <= 64");
    for (int l = 0; l < d; ++l)
      for (int m = 0; m < d; ++m) pairs.emplace_back(l, m);
    return pairs;
  }
  const std::uint64_t K = hoeffding_pairs(cfg);
  auto engine = make_engine(cfg.seed, 0x70a1'5eedULL);
  std::uniform_int_distribution<int> pick(0, d - 1);
  pairs.reserve(K);
  for (std::uint64_t i = 0; i < K; ++i) {
    const int l = pick(engine);
    const int m = pick(engine);
    pairs.emplace_back(l, m);
  }
  return pairs;
}

struct Estimate {
  double u = 0.0;
  double q = 1.0;
};

/// Runs `estimate(j)` per pair according to the configured sharing mode and
/// averages combine(est_l, est_m) over the pairs.
template <class EstimateFn, class Combine>
double average_over_pairs(const std::vector<std::pair<int, int>>& pairs, int d,
                          const EstimationConfig& cfg, EstimateFn&& estimate, Combine&& combine) {
  if (pairs.empty()) throw Error(ErrorKind::zero_trials, "no index pairs (K = 0)");
  std::vector<std::optional<Estimate>> cache(d);
  auto get = [&](int j) {
    if (cfg.estimation == IndexEstimation::per_pair) return estimate(j);
    if (!cache[j]) cache[j] = estimate(j);
    return *cache[j];
  };
  double sum = 0.0;
  for (const auto& [l, m] : pairs) {
    const Estimate a = get(l);
    const Estimate b = get(m);
    sum += combine(a, b);
  }
  return sum / static_cast<double>(pairs.size());
}

inline void finish_index_stats(ProtocolReport& rep, double lambda) {
  for (auto& [j, s] : rep.per_index) {
    if (s.n_trials > 0 || lambda > 0.0) s.u_hat = laplace_estimate(s.successes, s.n_trials, lambda);
    if (rep.with_output_states && (s.q_trials > 0 || lambda > 0.0)) {
      s.q_hat = laplace_estimate(s.q_successes, s.q_trials, lambda);
    }
  }
}

}  // namespace detail

/// Estimates lb = (1 + d X-bar)/(1 + d) from shots on the d basis states:
/// K uniformly drawn pairs (l, m), Laplace-smoothed u-hat for both indices
/// from N = chebyshev_trials shots each, X-hat = mean of sqrt(u_l u_m).
inline ProtocolReport run_protocol_probs(NoisyDevice& dev, const Rank1Pvm& pvm,
                                         const EstimationConfig& cfg) {
  cfg.validate();
  detail::require_pvm_povm(pvm, dev.povm());
  const int d = pvm.dim();
  ProtocolReport rep;
  rep.config = cfg;
  rep.dim = d;
  rep.device_seed = dev.seed();
  rep.device_stream = dev.stream();
  rep.pairs = detail::draw_pairs(d, cfg);
  rep.K = rep.pairs.size();

  const std::uint64_t n1 = chebyshev_trials(cfg, cfg.conservative ? 0.5 : cfg.u_guess);
  rep.trial_accounting.n1 = n1;
  std::vector<DensityMatrix> inputs;
  for (int j = 0; j < d; ++j) inputs.push_back(DensityMatrix::pure(pvm.state(j)));

  const std::uint64_t shots_before = dev.shots();
  auto estimate = [&](int j) {
    IndexStats& s = rep.per_index[j];
    ++s.estimates;
    detail::Estimate e;
    if (cfg.exact_probabilities) {
      e.u = std::clamp(dev.probabilities(inputs[j])[j], 0.0, 1.0);
      s.u_hat = e.u;
      return e;
    }
    const std::uint64_t hits = dev.count_outcome(inputs[j], j, n1);
    s.n_trials += n1;
    s.successes += hits;
    e.u = laplace_estimate(hits, n1, cfg.lambda);
    return e;
  };
  const double mean = detail::average_over_pairs(
      rep.pairs, d, cfg, estimate,
      [](const detail::Estimate& a, const detail::Estimate& b) { return std::sqrt(a.u * b.u); });
  rep.lb_hat = std::clamp(bound_from_mean(mean, d), 0.0, 1.0);
  rep.trial_accounting.total_shots = dev.shots() - shots_before;
  if (!cfg.exact_probabilities) detail::finish_index_stats(rep, cfg.lambda);
  return rep;
}

/// Output-state variant: each estimate measures Pi_j, and every time outcome
/// j occurs measures the device's post-measurement state again. First
/// measurements continue past N1 until N2 conditioned repeats are available
/// (M2 shots), so an estimate costs max(N1, M2) first measurements.
/// lb-hat = (1 + d mean(sqrt(u_l u_m) sqrt(Q_l Q_m)))/(1 + d).
inline ProtocolReport run_protocol_states(NoisyDevice& dev, const Rank1Pvm& pvm,
                                          const EstimationConfig& cfg) {
  cfg.validate();
  detail::require_pvm_povm(pvm, dev.povm());
  if (!dev.has_output_states()) {
    throw Error(ErrorKind::no_output_states, "run_protocol_states needs output states");
  }
  const int d = pvm.dim();
  ProtocolReport rep;
  rep.config = cfg;
  rep.dim = d;
  rep.with_output_states = true;
  rep.device_seed = dev.seed();
  rep.device_stream = dev.stream();
  rep.pairs = detail::draw_pairs(d, cfg);
  rep.K = rep.pairs.size();

  const std::uint64_t n1 = chebyshev_trials(cfg, cfg.conservative ? 0.5 : cfg.u_guess);
  const std::uint64_t n2 = chebyshev_trials(cfg, cfg.conservative ? 0.5 : cfg.q_guess);
  rep.trial_accounting.n1 = n1;
  rep.trial_accounting.n2 = n2;
  rep.trial_accounting.m2_max = 0;
  std::vector<DensityMatrix> inputs;
  for (int j = 0; j < d; ++j) inputs.push_back(DensityMatrix::pure(pvm.state(j)));

  const std::uint64_t shots_before = dev.shots();
  auto estimate = [&](int j) {
    IndexStats& s = rep.per_index[j];
    ++s.estimates;
    detail::Estimate e;
    if (cfg.exact_probabilities) {
      e.u = std::clamp(dev.probabilities(inputs[j])[j], 0.0, 1.0);
      e.q = std::clamp(dev.probabilities(dev.output_state(j))[j], 0.0, 1.0);
      s.u_hat = e.u;
      s.q_hat = e.q;
      return e;
    }
    std::uint64_t first = n1;
    std::uint64_t hits = dev.count_outcome(inputs[j], j, n1);
    if (hits < n2) {
      first += dev.shots_until(inputs[j], j, n2 - hits, cfg.max_shots_per_estimate);
      hits = n2;
      rep.trial_accounting.m2_max = std::max(*rep.trial_accounting.m2_max, first);
    }
    if (hits == 0 && cfg.lambda == 0.0) {
      throw Error(ErrorKind::insufficient_conditioned_samples,
                  "no conditioned repeats for index " + std::to_string(j));
    }
    const std::uint64_t repeats = dev.count_outcome(dev.output_state(j), j, hits);
    s.n_trials += first;
    s.successes += hits;
    s.q_trials += hits;
    s.q_successes += repeats;
    e.u = laplace_estimate(hits, first, cfg.lambda);
    e.q = laplace_estimate(repeats, hits, cfg.lambda);
    return e;
  };
  const double mean = detail::average_over_pairs(
      rep.pairs, d, cfg, estimate, [](const detail::Estimate& a, const detail::Estimate& b) {
        return std::sqrt(a.u * b.u) * std::sqrt(a.q * b.q);
      });
  rep.lb_hat = std::clamp(bound_from_mean(mean, d), 0.0, 1.0);
  rep.trial_accounting.total_shots = dev.shots() - shots_before;
  if (!cfg.exact_probabilities) detail::finish_index_stats(rep, cfg.lambda);
  return rep;
}

struct FkQkEntry {
  int k = 0;
  double F = 0.0;  // tr(rho_k Pi_k)
  double Q = 0.0;  // tr(rho_k E_k)
  bool ok = false;
};

struct FkQkReport {
  std::vector<FkQkEntry> entries;
  double y_bar = 0.0;  // (1/d^2) sum sqrt(u_l u_m) sqrt(F_l F_m)
  double z_bar = 0.0;  // same with Q in place of F
  bool all_ok = false;
  bool aggregate_ok = false;  // y_bar >= z_bar: the output-state bound is usable
};

/// Oracle check of F_k >= Q_k from the device model (no sampling).
inline FkQkReport check_fk_qk(const NoisyDevice& dev, const Rank1Pvm& pvm) {
  detail::require_pvm_povm(pvm, dev.povm());
  const std::vector<DensityMatrix>& rho = dev.output_states();
  const std::vector<double> u = overlaps_u(pvm, dev.povm());
  const int d = pvm.dim();
  FkQkReport rep;
  rep.all_ok = true;
  double sy = 0.0;
  double sz = 0.0;
  for (int k = 0; k < d; ++k) {
    FkQkEntry e;
    e.k = k;
    e.F = std::clamp((rho[k].matrix() * pvm.projector(k)).trace().real(), 0.0, 1.0);
    e.Q = std::clamp((rho[k].matrix() * dev.povm().effect(k)).trace().real(), 0.0, 1.0);
    e.ok = e.F >= e.Q - 1e-12;
    rep.all_ok = rep.all_ok && e.ok;
    sy += std::sqrt(u[k] * e.F);
    sz += std::sqrt(u[k] * e.Q);
    rep.entries.push_back(e);
  }
  rep.y_bar = sy * sy / (static_cast<double>(d) * d);
  rep.z_bar = sz * sz / (static_cast<double>(d) * d);
  rep.aggregate_ok = rep.y_bar >= rep.z_bar - 1e-12;
  return rep;
}

}  // namespace measfid
