#pragma once

// JSON model files and report serialization.
//   matrix : [[[re, im], ...], ...]   (row major)
//   POVM   : {"dim": d, "effects": [matrix, ...]}
//   PVM    : {"dim": d, "basis": [[[re, im], ...], ...]}   (one vector per outcome)
//   device : {"povm": POVM, "output_states": [matrix, ...]?, "seed": n}
// Doubles are written shortest-round-trip, so read(write(x)) == x bit for bit.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"
#include "measfid/core.hpp"
#include "measfid/device.hpp"
#include "measfid/metrics.hpp"
#include "measfid/protocols.hpp"
#include "measfid/qubit.hpp"
#include "measfid/tomography.hpp"

namespace measfid::io {

using json = nlohmann::json;

inline Error schema_error(const std::string& what) { return Error(ErrorKind::schema, what); }

namespace detail {

inline const json& field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object()) throw schema_error(where + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw schema_error(where + ": missing \"" + key + "\"");
  return *it;
}

inline double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw schema_error(where + ": expected a number");
  return j.get<double>();
}

inline int positive_int(const json& j, const std::string& where) {
  if (!j.is_number_integer() || j.get<std::int64_t>() < 1) {
    throw schema_error(where + ": expected a positive integer");
  }
  return j.get<int>();
}

inline std::uint64_t unsigned_int(const json& j, const std::string& where) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0)) {
    throw schema_error(where + ": expected a nonnegative integer");
  }
  return j.get<std::uint64_t>();
}

inline cplx complex_entry(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2) throw schema_error(where + ": complex entry must be [re, im]");
  return {number(j[0], where), number(j[1], where)};
}

}  // namespace detail

inline json to_json(cplx z) { return json::array({z.real(), z.imag()}); }

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(to_json(m(i, k)));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const json& j, int dim, const std::string& where) {
  if (!j.is_array() || static_cast<int>(j.size()) != dim) {
    throw schema_error(where + ": expected " + std::to_string(dim) + " rows");
  }
  Matrix m(dim, dim);
  for (int i = 0; i < dim; ++i) {
    const json& row = j[i];
    if (!row.is_array() || static_cast<int>(row.size()) != dim) {
      throw schema_error(where + ": row " + std::to_string(i) + " must have " + std::to_string(dim) + " entries");
    }
    for (int k = 0; k < dim; ++k) {
      m(i, k) = detail::complex_entry(row[k], where + "[" + std::to_string(i) + "][" + std::to_string(k) + "]");
    }
  }
  return m;
}

inline json vector_to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(to_json(v(i)));
  return a;
}

inline Vector vector_from_json(const json& j, int dim, const std::string& where) {
  if (!j.is_array() || static_cast<int>(j.size()) != dim) {
    throw schema_error(where + ": expected " + std::to_string(dim) + " amplitudes");
  }
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = detail::complex_entry(j[i], where);
  return v;
}

inline json povm_to_json(const std::vector<Matrix>& effects) {
  json e = json::array();
  for (const auto& m : effects) e.push_back(matrix_to_json(m));
  return {{"dim", effects.empty() ? 0 : effects.front().rows()}, {"effects", e}};
}

inline json povm_to_json(const Povm& p) { return povm_to_json(p.effects()); }

/// Effects as written, before any POVM validation.
inline std::vector<Matrix> effects_from_json(const json& j) {
  const int d = detail::positive_int(detail::field(j, "dim", "povm"), "povm.dim");
  const json& e = detail::field(j, "effects", "povm");
  if (!e.is_array() || e.empty()) throw schema_error("povm.effects: expected a nonempty array");
  std::vector<Matrix> out;
  for (std::size_t k = 0; k < e.size(); ++k) {
    out.push_back(matrix_from_json(e[k], d, "povm.effects[" + std::to_string(k) + "]"));
  }
  return out;
}

inline Povm povm_from_json(const json& j, const Tolerances& tol = {}) {
  return validate_povm(effects_from_json(j), tol);
}

inline json pvm_to_json(const Rank1Pvm& p) {
  json b = json::array();
  for (int k = 0; k < p.dim(); ++k) b.push_back(vector_to_json(p.basis_matrix().col(k)));
  return {{"dim", p.dim()}, {"basis", b}};
}

inline Rank1Pvm pvm_from_json(const json& j, const Tolerances& tol = {}) {
  const int d = detail::positive_int(detail::field(j, "dim", "pvm"), "pvm.dim");
  const json& b = detail::field(j, "basis", "pvm");
  if (!b.is_array() || static_cast<int>(b.size()) != d) {
    throw schema_error("pvm.basis: expected " + std::to_string(d) + " vectors");
  }
  Matrix cols(d, d);
  for (int k = 0; k < d; ++k) cols.col(k) = vector_from_json(b[k], d, "pvm.basis[" + std::to_string(k) + "]");
  return Rank1Pvm::from_basis(cols, tol.norm * 100.0);
}

inline json device_to_json(const NoisyDevice& dev) {
  json j = {{"povm", povm_to_json(dev.povm())}, {"seed", dev.seed()}};
  if (dev.has_output_states()) {
    json s = json::array();
    for (const auto& rho : dev.output_states()) s.push_back(matrix_to_json(rho.matrix()));
    j["output_states"] = s;
  }
  return j;
}

/// `seed_override` replaces the file's seed when set (the CLI --seed flag).
inline NoisyDevice device_from_json(const json& j, std::optional<std::uint64_t> seed_override = {},
                                    const Tolerances& tol = {}) {
  Povm povm = povm_from_json(detail::field(j, "povm", "device"), tol);
  std::uint64_t seed = 0;
  if (j.contains("seed")) seed = detail::unsigned_int(j["seed"], "device.seed");
  if (seed_override) seed = *seed_override;
  if (!j.contains("output_states") || j["output_states"].is_null()) return NoisyDevice(std::move(povm), seed);
  const json& s = j["output_states"];
  if (!s.is_array()) throw schema_error("device.output_states: expected an array");
  std::vector<DensityMatrix> rho;
  for (std::size_t k = 0; k < s.size(); ++k) {
    rho.push_back(DensityMatrix::from_matrix(
        matrix_from_json(s[k], povm.dim(), "device.output_states[" + std::to_string(k) + "]"), tol));
  }
  return NoisyDevice(std::move(povm), std::move(rho), seed);
}

// ---- reports ----

inline json to_json(const EstimationConfig& c) {
  return {{"epsilon", c.epsilon},
          {"delta", c.delta},
          {"lambda", c.lambda},
          {"seed", c.seed},
          {"u_guess", c.u_guess},
          {"q_guess", c.q_guess},
          {"conservative", c.conservative},
          {"range", {c.range_lo, c.range_hi}},
          {"exhaustive_pairs", c.exhaustive_pairs},
          {"exact_probabilities", c.exact_probabilities},
          {"estimation", c.estimation == IndexEstimation::cached ? "cached" : "per_pair"},
          {"max_shots_per_estimate", c.max_shots_per_estimate}};
}

inline json to_json(const ProtocolReport& r) {
  json per = json::object();
  for (const auto& [k, s] : r.per_index) {
    json e = {{"estimates", s.estimates}, {"n_trials", s.n_trials}, {"successes", s.successes}, {"u_hat", s.u_hat}};
    if (r.with_output_states) {
      e["q_trials"] = s.q_trials;
      e["q_successes"] = s.q_successes;
      e["q_hat"] = s.q_hat ? json(*s.q_hat) : json(nullptr);
    }
    per[std::to_string(k)] = e;
  }
  json acct = {{"n1", r.trial_accounting.n1}, {"total_shots", r.trial_accounting.total_shots}};
  if (r.trial_accounting.n2) acct["n2"] = *r.trial_accounting.n2;
  if (r.trial_accounting.m2_max) acct["m2_max"] = *r.trial_accounting.m2_max;
  return {{"lb_hat", r.lb_hat},
          {"ub_hat", 1.0 - r.lb_hat},
          {"dim", r.dim},
          {"K", r.K},
          {"with_output_states", r.with_output_states},
          {"per_index", per},
          {"trial_accounting", acct},
          {"config", to_json(r.config)},
          {"device", {{"seed", r.device_seed}, {"stream", r.device_stream}}}};
}

inline json to_json(const FidelityResult& f) {
  json j = {{"F_bar", f.value},
            {"avg_error", 1.0 - f.value},
            {"method", to_string(f.method)},
            {"std_err", f.std_err},
            {"error_estimate", f.error_estimate}};
  if (f.first_sum) j["first_sum"] = *f.first_sum;
  if (f.first_sum_analytic) j["first_sum_analytic"] = *f.first_sum_analytic;
  return j;
}

inline json to_json(const RegionReport& r) {
  return {{"mu_A0_bound", r.mu_A0_bound},     {"mu_A1_bound", r.mu_A1_bound},
          {"mu_A0_measure", r.mu_A0_measure}, {"mu_A1_measure", r.mu_A1_measure},
          {"measure_error", r.measure_error}, {"delta0", r.delta0},
          {"delta1", r.delta1},               {"lhs", r.lhs},
          {"lhs_error", r.lhs_error},         {"full_gap_integral", r.full_gap_integral},
          {"full_gap_error", r.full_gap_error}, {"sufficient_ok", r.sufficient_ok},
          {"rotated_phase", r.rotated_phase}};
}

inline json to_json(const FkQkReport& r) {
  json e = json::array();
  for (const auto& x : r.entries) e.push_back({{"k", x.k}, {"F", x.F}, {"Q", x.Q}, {"ok", x.ok}});
  return {{"entries", e}, {"y_bar", r.y_bar}, {"z_bar", r.z_bar}, {"all_ok", r.all_ok}, {"aggregate_ok", r.aggregate_ok}};
}

inline json to_json(const ReconstructedPovm& r) {
  json raw = json::array();
  for (const auto& m : r.raw) raw.push_back(matrix_to_json(m));
  const auto& d = r.diagnostics;
  return {{"raw_effects", raw},
          {"povm", r.projected ? povm_to_json(*r.projected) : json(nullptr)},
          {"diagnostics",
           {{"hermitize_residual", d.hermitize_residual},
            {"negative_eigs_clipped", d.negative_eigs_clipped},
            {"most_negative_eig", d.most_negative_eig},
            {"completeness_residual_raw", d.completeness_residual_raw},
            {"completeness_residual", d.completeness_residual},
            {"used_additive_correction", d.used_additive_correction}}},
          {"probabilities", r.probabilities},
          {"total_shots", r.total_shots}};
}

inline json to_json(const ScanResult& s) {
  json v = json::array();
  for (const auto& p : s.violations) v.push_back({{"u0", p.u0}, {"gamma_abs", p.gamma_abs}, {"gap", p.gap}, {"tol", p.tol}});
  return {{"violations", v}, {"max_negative_gap", s.max_negative_gap}, {"min_gap", s.min_gap}, {"points", s.points}};
}

// ---- files ----

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw schema_error(path.string() + ": " + e.what());
  }
}

/// Writes via a sibling temp file and rename, so readers never see a
/// partially written payload.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error(ErrorKind::io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorKind::io, "cannot rename onto " + path.string());
  }
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace measfid::io
