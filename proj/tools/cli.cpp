#include "cli.hpp"

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "measfid/json_io.hpp"
#include "measfid/measfid.hpp"

namespace measfid::cli {
namespace {

using io::json;

struct Options {
  std::string command;
  std::string povm;
  std::string device;
  std::string pvm;
  std::string out;
  std::string config;
  std::vector<double> u;
  std::vector<double> q;
  double epsilon = 0.01;
  double delta = 0.05;
  double lambda = 1.0;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string integrator = "auto";
  std::size_t mc_samples = 1'000'000;
  unsigned threads = 0;
  bool exhaustive_pairs = false;
  // protocol
  double u_guess = 0.99;
  double q_guess = 0.99;
  bool conservative = false;
  bool cached = false;
  bool exact = false;
  double range_lo = 0.0;
  double range_hi = 1.0;
  // tomography
  std::uint64_t shots = 10'000;
  // sweep / scan
  std::vector<double> u0s{0.99, 0.995, 0.999};
  int gamma_points = 50;
  double phase = 0.0;
  int n_theta = 256;
  int n_phi = 256;
  double u0_min = 0.5;
  double u0_max = 0.99;
  double u0_step = 0.01;
  bool full = false;
};

std::string fmt4(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", x);
  return buf;
}

std::string fmtg(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

json read_file(const std::string& path) { return io::read_json_file(path); }

void require(bool cond, const std::string& what) {
  if (!cond) throw Error(ErrorKind::out_of_range, what);
}

NoisyDevice load_device(const Options& o) {
  require(o.povm.empty() || o.device.empty(), "give either --povm or --device, not both");
  if (!o.device.empty()) {
    return io::device_from_json(read_file(o.device),
                                o.seed_given ? std::optional<std::uint64_t>(o.seed) : std::nullopt);
  }
  require(!o.povm.empty(), "--povm or --device is required");
  return NoisyDevice(io::povm_from_json(read_file(o.povm)), o.seed);
}

Rank1Pvm load_pvm(const Options& o, int dim) {
  if (o.pvm.empty()) return Rank1Pvm::computational(dim);
  Rank1Pvm p = io::pvm_from_json(read_file(o.pvm));
  require_same_dim(p.dim(), dim, "--pvm");
  return p;
}

EstimationConfig estimation_config(const Options& o) {
  EstimationConfig c;
  c.epsilon = o.epsilon;
  c.delta = o.delta;
  c.lambda = o.lambda;
  c.seed = o.seed;
  c.u_guess = o.u_guess;
  c.q_guess = o.q_guess;
  c.conservative = o.conservative;
  c.range_lo = o.range_lo;
  c.range_hi = o.range_hi;
  c.exhaustive_pairs = o.exhaustive_pairs;
  c.exact_probabilities = o.exact;
  c.estimation = o.cached ? IndexEstimation::cached : IndexEstimation::per_pair;
  return c;
}

/// Effective options for the command, in --config form.
json config_echo(const Options& o) {
  json c = {{"command", o.command}, {"seed", o.seed}, {"threads", o.threads}};
  auto path = [&](const char* k, const std::string& v) {
    if (!v.empty()) c[k] = v;
  };
  path("povm", o.povm);
  path("device", o.device);
  path("pvm", o.pvm);
  const std::string& cmd = o.command;
  if (cmd == "bound") {
    c["u"] = o.u;
    if (!o.q.empty()) c["q"] = o.q;
  }
  if (cmd == "fidelity") {
    c["integrator"] = o.integrator;
    c["mc-samples"] = o.mc_samples;
    c["n-theta"] = o.n_theta;
    c["n-phi"] = o.n_phi;
  }
  if (cmd == "protocol" || cmd == "protocol-states" || cmd == "trials") {
    c["epsilon"] = o.epsilon;
    c["delta"] = o.delta;
    c["u-guess"] = o.u_guess;
    c["q-guess"] = o.q_guess;
    c["conservative"] = o.conservative;
    c["range-lo"] = o.range_lo;
    c["range-hi"] = o.range_hi;
  }
  if (cmd == "protocol" || cmd == "protocol-states") {
    c["lambda"] = o.lambda;
    c["exhaustive-pairs"] = o.exhaustive_pairs;
    c["cached"] = o.cached;
    c["exact"] = o.exact;
  }
  if (cmd == "tomography") {
    c["shots"] = o.shots;
    c["lambda"] = o.lambda;
    c["exact"] = o.exact;
  }
  if (cmd == "sweep") {
    c["u0"] = o.u0s;
    c["gamma-points"] = o.gamma_points;
    c["phase"] = o.phase;
  }
  if (cmd == "scan") {
    c["u0-min"] = o.u0_min;
    c["u0-max"] = o.u0_max;
    c["u0-step"] = o.u0_step;
    c["gamma-points"] = o.gamma_points;
    c["full"] = o.full;
  }
  if (cmd == "sweep" || cmd == "scan") {
    c["n-theta"] = o.n_theta;
    c["n-phi"] = o.n_phi;
  }
  return c;
}

struct Result {
  std::string payload;  // written to --out
  std::string summary;  // printed to stdout
  bool payload_to_stdout = false;
};

Result cmd_validate(const Options& o) {
  json j;
  std::ostringstream s;
  if (!o.device.empty()) {
    NoisyDevice dev = load_device(o);
    const PovmDiagnostics d = dev.povm().diagnostics();
    j = {{"valid", true},
         {"dim", dev.dim()},
         {"outcomes", dev.povm().size()},
         {"has_output_states", dev.has_output_states()},
         {"min_eig", d.min_eig},
         {"completeness_residual", d.completeness_residual},
         {"hermitian_residual", d.hermitian_residual}};
    s << "valid device: d=" << dev.dim() << " outcomes=" << dev.povm().size()
      << (dev.has_output_states() ? " with output states" : "") << "\n";
  } else if (o.povm.empty()) {
    require(!o.pvm.empty(), "--povm, --device or --pvm is required");
    const Rank1Pvm p = io::pvm_from_json(read_file(o.pvm));
    j = {{"valid", true}, {"dim", p.dim()}, {"pvm", io::pvm_to_json(p)}};
    s << "valid PVM: d=" << p.dim() << "\n";
  } else {
    const Povm p = io::povm_from_json(read_file(o.povm));
    const PovmDiagnostics d = p.diagnostics();
    j = {{"valid", true},
         {"dim", p.dim()},
         {"outcomes", p.size()},
         {"min_eig", d.min_eig},
         {"completeness_residual", d.completeness_residual},
         {"hermitian_residual", d.hermitian_residual}};
    s << "valid POVM: d=" << p.dim() << " outcomes=" << p.size() << " min_eig=" << fmtg(d.min_eig)
      << " completeness_residual=" << fmtg(d.completeness_residual) << "\n";
    if (p.size() == static_cast<std::size_t>(p.dim())) {
      const std::vector<double> u = overlaps_u(load_pvm(o, p.dim()), p);
      j["u"] = u;
    }
  }
  j["config"] = config_echo(o);
  return {io::dump(j), s.str()};
}

Integrator integrator_from(const Options& o) {
  Integrator in;
  if (o.integrator == "quad") in.kind = IntegratorKind::quadrature;
  else if (o.integrator == "mc") in.kind = IntegratorKind::monte_carlo;
  else in.kind = IntegratorKind::automatic;
  in.quadrature = BlochQuadrature(o.n_theta, o.n_phi);
  in.mc_samples = o.mc_samples;
  in.seed = o.seed;
  in.mc.threads = o.threads;
  return in;
}

Result cmd_fidelity(const Options& o) {
  NoisyDevice dev = load_device(o);
  const Rank1Pvm pvm = load_pvm(o, dev.dim());
  const Integrator in = integrator_from(o);
  const FidelityResult f = avg_fidelity_probs(pvm, dev.povm(), in);
  const std::vector<double> u = overlaps_u(pvm, dev.povm());
  const double lb = lower_bound_probs({u, std::nullopt});
  json j = {{"fidelity", io::to_json(f)}, {"u", u}, {"lb", lb}, {"ub", 1.0 - lb}, {"dim", dev.dim()}};
  std::ostringstream s;
  s << "F=" << fmtg(f.value) << " r=" << fmtg(1.0 - f.value) << " (" << to_string(f.method) << ")"
    << " lb=" << fmt4(lb) << " ub=" << fmt4(1.0 - lb) << "\n";
  if (dev.has_output_states()) {
    const FidelityResult fs = avg_fidelity_states(pvm, dev, in);
    std::vector<double> qv;
    for (int k = 0; k < dev.dim(); ++k) {
      qv.push_back(std::clamp((dev.output_state(k).matrix() * dev.povm().effect(k)).trace().real(), 0.0, 1.0));
    }
    const double lbs = lower_bound_states({u, qv});
    j["with_states"] = {{"fidelity", io::to_json(fs)}, {"q", qv}, {"lb", lbs}, {"ub", 1.0 - lbs}};
    s << "with output states: F=" << fmtg(fs.value) << " lb=" << fmt4(lbs) << " ub=" << fmt4(1.0 - lbs) << "\n";
  }
  j["config"] = config_echo(o);
  return {io::dump(j), s.str()};
}

Result cmd_bound(const Options& o) {
  require(!o.u.empty(), "--u is required");
  const BoundInputs in{o.u, o.q.empty() ? std::nullopt : std::optional<std::vector<double>>(o.q)};
  const double lb = lower_bound_probs(in);
  json j = {{"u", o.u}, {"x_bar", x_bar(o.u)}, {"lb", lb}, {"ub", 1.0 - lb}};
  std::ostringstream s;
  s << "lb=" << fmt4(lb) << " ub=" << fmt4(1.0 - lb) << "\n";
  if (in.q) {
    const double lbs = lower_bound_states(in);
    j["q"] = o.q;
    j["lb_states"] = lbs;
    j["ub_states"] = 1.0 - lbs;
    s << "lb_states=" << fmt4(lbs) << " ub_states=" << fmt4(1.0 - lbs) << "\n";
  }
  j["config"] = config_echo(o);
  return {io::dump(j), s.str()};
}

Result cmd_protocol(const Options& o, bool states) {
  NoisyDevice dev = load_device(o);
  const Rank1Pvm pvm = load_pvm(o, dev.dim());
  const EstimationConfig cfg = estimation_config(o);
  const ProtocolReport r = states ? run_protocol_states(dev, pvm, cfg) : run_protocol_probs(dev, pvm, cfg);
  json j = io::to_json(r);
  j["config_echo"] = config_echo(o);
  std::ostringstream s;
  s << "lb_hat=" << fmt4(r.lb_hat) << " ub_hat=" << fmt4(1.0 - r.lb_hat) << " K=" << r.K
    << " N1=" << r.trial_accounting.n1;
  if (r.trial_accounting.n2) s << " N2=" << *r.trial_accounting.n2;
  s << " shots=" << r.trial_accounting.total_shots << "\n";
  return {io::dump(j), s.str()};
}

Result cmd_tomography(const Options& o) {
  NoisyDevice dev = load_device(o);
  const Rank1Pvm pvm = load_pvm(o, dev.dim());
  const TomographyPlan plan(pvm, o.shots, o.lambda);
  const ReconstructedPovm rec = o.exact ? reconstruct_exact(dev.povm(), plan) : reconstruct(dev, plan);
  double err = 0.0;
  for (std::size_t k = 0; k < rec.raw.size(); ++k) err = std::max(err, max_abs(rec.raw[k] - dev.povm().effect(k)));
  const TomographyCost cost = cost_model(dev.dim(), o.exact ? 0 : o.shots);
  json j = io::to_json(rec);
  j["max_raw_error"] = err;
  j["cost"] = {{"states", cost.states}, {"probabilities", cost.probabilities}, {"total_shots", cost.total_shots}};
  j["config"] = config_echo(o);
  std::ostringstream s;
  s << "states=" << cost.states << " probabilities=" << cost.probabilities << " shots=" << rec.total_shots
    << " max_raw_error=" << fmtg(err) << " clipped=" << rec.diagnostics.negative_eigs_clipped << "\n";
  return {io::dump(j), s.str()};
}

Result cmd_sweep(const Options& o) {
  const BlochQuadrature quad(o.n_theta, o.n_phi);
  const std::vector<SweepRow> rows = sweep_table1(quad, o.u0s, o.gamma_points, o.phase, o.threads);
  std::ostringstream csv;
  write_sweep_csv(csv, rows);
  std::ostringstream s;
  for (double u0 : o.u0s) {
    const double lb = qubit_lower_bound(u0);
    s << "u0=" << fmtg(u0) << " lb=" << fmt4(lb) << " ub=" << fmt4(1.0 - lb) << "\n";
  }
  return {csv.str(), s.str(), o.out.empty()};
}

Result cmd_scan(const Options& o) {
  const double step = o.full ? 1e-4 : o.u0_step;
  const double hi = o.full ? 0.9999 : o.u0_max;
  const std::vector<double> grid = u0_grid(o.u0_min, hi, step);
  const BlochQuadrature quad(o.n_theta, o.n_phi);
  const ScanResult r = violation_scan(grid, o.gamma_points, quad, o.threads);
  json j = io::to_json(r);
  j["config"] = config_echo(o);
  std::ostringstream s;
  s << "points=" << r.points << " violations=" << r.violations.size() << " min_gap=" << fmtg(r.min_gap) << "\n";
  return {io::dump(j), s.str()};
}

Result cmd_trials(const Options& o) {
  const EstimationConfig cfg = estimation_config(o);
  cfg.validate();
  const double ug = o.conservative ? 0.5 : o.u_guess;
  const std::uint64_t n = chebyshev_trials(cfg, ug);
  const std::uint64_t k = hoeffding_pairs(cfg);
  json j = {{"chebyshev_trials", n},
            {"chebyshev_multiplier", chebyshev_multiplier(o.delta)},
            {"hoeffding_pairs", k},
            {"hoeffding_bound", hoeffding_bound(o.epsilon, o.delta, o.range_lo, o.range_hi)},
            {"config", config_echo(o)}};
  std::ostringstream s;
  s << "chebyshev_trials=" << n << " hoeffding_pairs=" << k << "\n";
  return {io::dump(j), s.str()};
}

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hostname() {
  char buf[256] = {0};
  if (gethostname(buf, sizeof buf - 1) != 0) return "unknown";
  return buf;
}

void write_outputs(const Options& o, const Result& r, const std::vector<std::string>& args) {
  if (o.out.empty()) return;
  io::write_file_atomic(o.out, r.payload);
  json meta = {{"timestamp", utc_timestamp()}, {"host", hostname()}, {"argv", args}, {"payload", o.out}};
  io::write_file_atomic(o.out + ".meta.json", io::dump(meta));
}

std::string json_scalar(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

/// Appends --key value for every config-file key not already on the command
/// line, so explicit flags win.
std::vector<std::string> merge_config(const std::vector<std::string>& args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  const json cfg = io::read_json_file(path);
  if (!cfg.is_object()) throw io::schema_error("config file must hold a JSON object");
  auto present = [&](const std::string& flag) {
    for (const auto& a : args) {
      if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    }
    return false;
  };
  std::vector<std::string> merged = args;
  for (const auto& [key, value] : cfg.items()) {
    if (key == "command" || key == "config") continue;
    const std::string flag = "--" + key;
    if (present(flag)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) merged.push_back(flag);
    } else if (value.is_array()) {
      std::string joined;
      for (const auto& x : value) joined += (joined.empty() ? "" : ",") + json_scalar(x);
      merged.push_back(flag);
      merged.push_back(joined);
    } else if (!value.is_null()) {
      merged.push_back(flag);
      merged.push_back(json_scalar(value));
    }
  }
  return merged;
}

void print_error(std::ostream& err, const std::string& kind, const std::string& category, const std::string& msg) {
  err << json{{"error", {{"kind", kind}, {"category", category}, {"message", msg}}}}.dump() << "\n";
}

const char* category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::validation: return "validation";
    case ErrorCategory::io: return "io";
    case ErrorCategory::numerical: return "numerical";
  }
  return "unknown";
}

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::validation: return 1;
    case ErrorCategory::io: return 2;
    case ErrorCategory::numerical: return 3;
  }
  return 3;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Average measurement fidelity: bounds, estimators, tomography and qubit sweeps", "measfid"};
  app.require_subcommand(1);

  auto io_flags = [&](CLI::App* c) {
    c->add_option("--povm", o.povm, "POVM JSON file");
    c->add_option("--device", o.device, "device JSON file");
    c->add_option("--pvm", o.pvm, "ideal PVM JSON file (default: computational basis)");
  };
  auto common = [&](CLI::App* c) {
    c->add_option("--out", o.out, "output path");
    c->add_option("--config", o.config, "JSON config; explicit flags win");
    c->add_option("--seed", o.seed, "RNG seed");
    c->add_option("--threads", o.threads, "worker cap (0 = hardware)");
  };
  auto estimation = [&](CLI::App* c) {
    c->add_option("--epsilon", o.epsilon, "accuracy");
    c->add_option("--delta", o.delta, "failure probability");
    c->add_option("--u-guess", o.u_guess, "planning value for u_k");
    c->add_option("--q-guess", o.q_guess, "planning value for Q_k");
    c->add_flag("--conservative", o.conservative, "plan trials at u = 1/2");
    c->add_option("--range-lo", o.range_lo, "lower end of the pair statistic range");
    c->add_option("--range-hi", o.range_hi, "upper end of the pair statistic range");
  };
  auto quadrature = [&](CLI::App* c) {
    c->add_option("--n-theta", o.n_theta, "quadrature nodes in theta");
    c->add_option("--n-phi", o.n_phi, "quadrature nodes in phi");
  };

  CLI::App* validate = app.add_subcommand("validate", "check a POVM, PVM or device file");
  io_flags(validate);
  common(validate);

  CLI::App* fidelity = app.add_subcommand("fidelity", "exact average fidelity and closed-form bound");
  io_flags(fidelity);
  common(fidelity);
  quadrature(fidelity);
  fidelity->add_option("--integrator", o.integrator, "quad or mc (default: quad for d = 2)")
      ->check(CLI::IsMember({"auto", "quad", "mc"}));
  fidelity->add_option("--mc-samples", o.mc_samples, "Monte Carlo sample count");

  CLI::App* bound = app.add_subcommand("bound", "closed-form lower bound from u (and q)");
  common(bound);
  bound->add_option("--u", o.u, "comma-separated u_k")->delimiter(',');
  bound->add_option("--q", o.q, "comma-separated Q_k")->delimiter(',');

  CLI::App* protocol = app.add_subcommand("protocol", "estimate lb from device shots");
  CLI::App* protocol_states = app.add_subcommand("protocol-states", "estimate lb with output-state repeats");
  for (CLI::App* c : {protocol, protocol_states}) {
    io_flags(c);
    common(c);
    estimation(c);
    c->add_option("--lambda", o.lambda, "Laplace smoothing strength");
    c->add_flag("--exhaustive-pairs", o.exhaustive_pairs, "enumerate all d^2 index pairs");
    c->add_flag("--cached", o.cached, "estimate each index once and reuse it across pairs");
    c->add_flag("--exact", o.exact, "use exact probabilities instead of shots");
  }

  CLI::App* tomography = app.add_subcommand("tomography", "reconstruct the device POVM");
  io_flags(tomography);
  common(tomography);
  tomography->add_option("--shots", o.shots, "shots per probe state");
  tomography->add_option("--lambda", o.lambda, "Laplace smoothing strength");
  tomography->add_flag("--exact", o.exact, "use exact probabilities instead of shots");

  CLI::App* sweep = app.add_subcommand("sweep", "qubit fidelity vs coherence, CSV");
  common(sweep);
  quadrature(sweep);
  sweep->add_option("--u0", o.u0s, "comma-separated u0 values")->delimiter(',');
  sweep->add_option("--gamma-points", o.gamma_points, "points on [0, R_max]");
  sweep->add_option("--phase", o.phase, "arg(gamma)");

  CLI::App* scan = app.add_subcommand("scan", "search for lower-bound violations on a (u0, gamma) grid");
  common(scan);
  quadrature(scan);
  scan->add_option("--u0-min", o.u0_min, "first u0");
  scan->add_option("--u0-max", o.u0_max, "last u0");
  scan->add_option("--u0-step", o.u0_step, "u0 step");
  scan->add_option("--gamma-points", o.gamma_points, "points on [0, R_max]");
  scan->add_flag("--full", o.full, "u0 step 1e-4 up to 0.9999 (hours)");

  CLI::App* trials = app.add_subcommand("trials", "trial and pair counts for given accuracy");
  common(trials);
  estimation(trials);

  try {
    const std::vector<std::string> args = merge_config(raw_args);
    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
      app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
      out << app.help();
      return 0;
    } catch (const CLI::CallForAllHelp& e) {
      out << app.help("", CLI::AppFormatMode::All);
      return 0;
    } catch (const CLI::ParseError& e) {
      print_error(err, "UsageError", "validation", e.what());
      return 1;
    }
    CLI::App* sub = app.get_subcommands().front();
    o.command = sub->get_name();
    o.seed_given = sub->count("--seed") > 0;

    Result r;
    if (o.command == "validate") r = cmd_validate(o);
    else if (o.command == "fidelity") r = cmd_fidelity(o);
    else if (o.command == "bound") r = cmd_bound(o);
    else if (o.command == "protocol") r = cmd_protocol(o, false);
    else if (o.command == "protocol-states") r = cmd_protocol(o, true);
    else if (o.command == "tomography") r = cmd_tomography(o);
    else if (o.command == "sweep") r = cmd_sweep(o);
    else if (o.command == "scan") r = cmd_scan(o);
    else r = cmd_trials(o);

    write_outputs(o, r, raw_args);
    if (r.payload_to_stdout) out << r.payload;
    else out << r.summary;
    return 0;
  } catch (const Error& e) {
    print_error(err, to_string(e.kind()), category_name(e.category()), e.what());
    return exit_code(e.category());
  } catch (const std::exception& e) {
    print_error(err, "InternalError", "numerical", e.what());
    return 3;
  }
}

}  // namespace measfid::cli
