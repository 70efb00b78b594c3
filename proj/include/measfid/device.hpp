#pragma once

// Simulated noisy measurement apparatus. Outcome k is drawn with probability
// tr(E_k sigma); when output states are configured the post-measurement state
// for outcome k is the fixed rho_k, independent of the input.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <type_traits>
#include <utility>
#include <vector>

#include "measfid/core.hpp"
#include "measfid/haar.hpp"

namespace measfid {

inline constexpr double kProbabilityClip = 1e-9;

struct OutcomeRecord {
  int outcome = 0;
  std::optional<DensityMatrix> post_state;
};

struct SequentialOutcome {
  int first = 0;
  std::optional<int> second;
};

/// Born-rule probabilities tr(E_k sigma). Negatives down to -1e-9 are clipped
/// to zero and the vector renormalized; anything worse is BadDistribution.
inline std::vector<double> outcome_probabilities(const Povm& povm, const Matrix& sigma) {
  require_same_dim(povm.dim(), static_cast<int>(sigma.rows()), "measurement input");
  std::vector<double> p(povm.size());
  double total = 0.0;
  for (std::size_t k = 0; k < povm.size(); ++k) {
    const double v = (povm.effect(k) * sigma).trace().real();
    if (v < -kProbabilityClip || !std::isfinite(v)) {
      throw Error(ErrorKind::bad_distribution,
                  "outcome " + std::to_string(k) + " has probability " + std::to_string(v));
    }
    p[k] = std::max(v, 0.0);
    total += p[k];
  }
  if (std::abs(total - 1.0) > kProbabilityClip) {
    throw Error(ErrorKind::bad_distribution, "probabilities sum to " + std::to_string(total));
  }
  for (double& v : p) v /= total;
  return p;
}

class NoisyDevice {
 public:
  NoisyDevice(Povm povm, std::uint64_t seed, std::uint64_t stream = 0)
      : povm_(std::move(povm)), seed_(seed), stream_(stream), engine_(make_engine(seed, stream)) {}

  NoisyDevice(Povm povm, std::vector<DensityMatrix> output_states, std::uint64_t seed,
              std::uint64_t stream = 0)
      : NoisyDevice(std::move(povm), seed, stream) {
    if (output_states.size() != povm_.size()) {
      throw Error(ErrorKind::dim_mismatch, "need one output state per outcome");
    }
    for (const auto& rho : output_states) require_same_dim(rho.dim(), povm_.dim(), "output state");
    outputs_ = std::move(output_states);
  }

  int dim() const { return povm_.dim(); }
  const Povm& povm() const { return povm_; }
  bool has_output_states() const { return outputs_.has_value(); }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  const std::vector<DensityMatrix>& output_states() const {
    if (!outputs_) throw Error(ErrorKind::no_output_states, "device has no output states");
    return *outputs_;
  }
  const DensityMatrix& output_state(int k) const { return output_states().at(k); }

  /// Total shots taken since construction (or the last reset).
  std::uint64_t shots() const { return shots_; }
  void reset_shots() { shots_ = 0; }

  /// Same model, fresh RNG keyed by (seed, stream), shot counter at zero.
  NoisyDevice with_stream(std::uint64_t stream) const {
    NoisyDevice copy = *this;
    copy.stream_ = stream;
    copy.engine_ = make_engine(seed_, stream);
    copy.shots_ = 0;
    return copy;
  }

  std::vector<double> probabilities(const DensityMatrix& input) const {
    return outcome_probabilities(povm_, input.matrix());
  }

  /// Inverse-CDF sampling with a Kahan-summed cumulative.
  int sample_outcome(const Matrix& sigma) {
    const std::vector<double> p = outcome_probabilities(povm_, sigma);
    const double x = uniform_(engine_);
    double cum = 0.0;
    double comp = 0.0;
    int last_nonzero = 0;
    ++shots_;
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (p[k] > 0.0) last_nonzero = static_cast<int>(k);
      const double y = p[k] - comp;
      const double t = cum + y;
      comp = (t - cum) - y;
      cum = t;
      if (x < cum && p[k] > 0.0) return static_cast<int>(k);
    }
    return last_nonzero;
  }

  OutcomeRecord measure(const DensityMatrix& input) {
    require_same_dim(dim(), input.dim(), "measure");
    OutcomeRecord r;
    r.outcome = sample_outcome(input.matrix());
    if (outputs_) r.post_state = (*outputs_)[r.outcome];
    return r;
  }

  /// Measures `input`, then measures the post-measurement state rho_first.
  SequentialOutcome measure_sequential(const DensityMatrix& input) {
    if (!outputs_) throw Error(ErrorKind::no_output_states, "sequential measurement");
    require_same_dim(dim(), input.dim(), "measure_sequential");
    SequentialOutcome r;
    r.first = sample_outcome(input.matrix());
    r.second = sample_outcome((*outputs_)[r.first].matrix());
    return r;
  }

  /// Outcome histogram of `shots` independent measurements of `input`,
  /// drawn as a multinomial by successive conditional binomials.
  std::vector<std::uint64_t> sample_counts(const DensityMatrix& input, std::uint64_t shots) {
    require_same_dim(dim(), input.dim(), "sample_counts");
    const std::vector<double> p = outcome_probabilities(povm_, input.matrix());
    std::vector<std::uint64_t> counts(p.size(), 0);
    std::uint64_t remaining = shots;
    double mass = 1.0;
    for (std::size_t k = 0; k + 1 < p.size() && remaining > 0; ++k) {
      const double cond = mass > 0.0 ? std::clamp(p[k] / mass, 0.0, 1.0) : 0.0;
      const std::uint64_t n = draw_binomial(remaining, cond);
      counts[k] = n;
      remaining -= n;
      mass -= p[k];
    }
    counts.back() += remaining;
    shots_ += shots;
    return counts;
  }

  /// Number of times outcome k occurs in `shots` measurements of `input`.
  std::uint64_t count_outcome(const DensityMatrix& input, int k, std::uint64_t shots) {
    require_same_dim(dim(), input.dim(), "count_outcome");
    const double p = outcome_probabilities(povm_, input.matrix()).at(k);
    shots_ += shots;
    return draw_binomial(shots, p);
  }

  /// Keeps measuring `input` until outcome k has occurred `needed` times and
  /// returns the number of shots spent. Throws InsufficientConditionedSamples
  /// when the expected or realized cost exceeds max_shots.
  std::uint64_t shots_until(const DensityMatrix& input, int k, std::uint64_t needed,
                            std::uint64_t max_shots) {
    if (needed == 0) return 0;
    const double p = outcome_probabilities(povm_, input.matrix()).at(k);
    if (p <= 0.0 || static_cast<double>(needed) / p > static_cast<double>(max_shots)) {
      throw Error(ErrorKind::insufficient_conditioned_samples,
                  "outcome " + std::to_string(k) + " has probability " + std::to_string(p) +
                      "; cannot collect " + std::to_string(needed) + " events within " +
                      std::to_string(max_shots) + " shots");
    }
    std::uint64_t failures = 0;
    if (p < 1.0) {
      std::negative_binomial_distribution<std::uint64_t> nb(needed, p);
      failures = nb(engine_);
    }
    const std::uint64_t spent = needed + failures;
    if (spent > max_shots) {
      throw Error(ErrorKind::insufficient_conditioned_samples,
                  "needed " + std::to_string(spent) + " shots, cap " + std::to_string(max_shots));
    }
    shots_ += spent;
    return spent;
  }

 private:
  std::uint64_t draw_binomial(std::uint64_t n, double p) {
    if (n == 0 || p <= 0.0) return 0;
    if (p >= 1.0) return n;
    std::binomial_distribution<std::uint64_t> b(n, p);
    return b(engine_);
  }

  Povm povm_;
  std::optional<std::vector<DensityMatrix>> outputs_;
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::uint64_t shots_ = 0;
};

inline OutcomeRecord measure(NoisyDevice& dev, const DensityMatrix& input) { return dev.measure(input); }

inline SequentialOutcome measure_sequential(NoisyDevice& dev, const DensityMatrix& input) {
  return dev.measure_sequential(input);
}

/// Anything that can perform a measurement followed by a repeat measurement
/// on its own post-measurement state. NoisyDevice models this with
/// input-independent output states; test harnesses may plug in devices whose
/// output states depend on the input.
template <class D>
concept SequentialDevice = requires(D d, const DensityMatrix& rho) {
  { d.measure_sequential(rho) } -> std::same_as<SequentialOutcome>;
};

struct StateDependenceProbe {
  double q1 = 0.0;  // repeat frequency of outcome k after input psi1
  double q2 = 0.0;
  std::uint64_t conditioned1 = 0;
  std::uint64_t conditioned2 = 0;
  double z_score = 0.0;
};

inline constexpr std::uint64_t kMinConditionedEvents = 100;

/// Estimates tr(rho_k(psi) E_k) for two inputs from repeat statistics and
/// returns the two-proportion z score under the pooled binomial variance.
/// `factory(stream)` must return a fresh SequentialDevice.
template <class Factory>
  requires SequentialDevice<std::invoke_result_t<Factory&, std::uint64_t>>
StateDependenceProbe probe_state_dependence(Factory&& factory, const PureState& psi1,
                                            const PureState& psi2, int k, std::uint64_t shots) {
  auto run = [&](const PureState& psi, std::uint64_t stream, std::uint64_t& conditioned) {
    auto dev = factory(stream);
    const DensityMatrix input = DensityMatrix::pure(psi);
    std::uint64_t repeats = 0;
    conditioned = 0;
    for (std::uint64_t s = 0; s < shots; ++s) {
      const SequentialOutcome o = dev.measure_sequential(input);
      if (o.first != k) continue;
      ++conditioned;
      if (o.second && *o.second == k) ++repeats;
    }
    if (conditioned < kMinConditionedEvents) {
      throw Error(ErrorKind::insufficient_conditioned_samples,
                  "only " + std::to_string(conditioned) + " conditioned events for outcome " +
                      std::to_string(k));
    }
    return repeats;
  };
  StateDependenceProbe r;
  const std::uint64_t m1 = run(psi1, 1, r.conditioned1);
  const std::uint64_t m2 = run(psi2, 2, r.conditioned2);
  const double n1 = static_cast<double>(r.conditioned1);
  const double n2 = static_cast<double>(r.conditioned2);
  r.q1 = static_cast<double>(m1) / n1;
  r.q2 = static_cast<double>(m2) / n2;
  const double pooled = static_cast<double>(m1 + m2) / (n1 + n2);
  const double var = pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2);
  if (var > 0.0) {
    r.z_score = (r.q1 - r.q2) / std::sqrt(var);
  } else {
    r.z_score = r.q1 == r.q2 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), r.q1 - r.q2);
  }
  return r;
}

}  // namespace measfid
