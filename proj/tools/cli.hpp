#pragma once

// Command-line front end. `run_cli` is the whole program minus process
// plumbing so tests can drive it in-process with captured streams.
//
// Exit codes: 0 success, 2 validation failure (bad flags, malformed or
// invalid input, failed audit), 3 numerical failure, 1 anything else.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "calibra/calibra.hpp"
#include "calibra/io.hpp"

namespace calibra::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitOther = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;

struct GlobalOptions {
  std::string instance;
  std::string out;
  bool quiet = false;
};

namespace detail {

/// Reads CALIBRA_QUAD_TOL (if set) into the process-wide tolerance.
inline void apply_environment() {
  const char* env = std::getenv("CALIBRA_QUAD_TOL");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const double tol = std::strtod(env, &end);
  if (end == env || *end != '\0') {
    throw ValidationError(std::string("CALIBRA_QUAD_TOL is not a number: '") + env + "'");
  }
  numerics::set_quadrature_tolerance(tol);
}

inline Instance require_instance(const GlobalOptions& g) {
  if (g.instance.empty()) throw ValidationError("--instance PATH is required for this command");
  return load_instance(g.instance);
}

/// Output sink: the --out file when given, otherwise the caller's stream.
class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) throw ValidationError("cannot write '" + path + "'");
      stream_ = file_.get();
    }
  }
  std::ostream& stream() { return *stream_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_;
};

inline std::string optional_int(const std::optional<int>& v) { return v ? std::to_string(*v) : std::string(); }

}  // namespace detail

// --------------------------------------------------------------------------
// ratio: tabulate x(l) and the revenue at x(l) and at x = 1.

struct RatioOptions {
  std::vector<double> l_values;
  int points = 11;
};

inline int cmd_ratio(const GlobalOptions& g, const RatioOptions& o, std::ostream& out) {
  const auto inst = detail::require_instance(g);
  std::vector<double> ls = o.l_values;
  if (ls.empty()) {
    if (o.points < 2) throw ValidationError("--points must be at least 2");
    for (int k = 0; k < o.points; ++k) ls.push_back(static_cast<double>(k) / (o.points - 1));
  }
  detail::Output sink(g.out, out);
  CsvWriter csv(sink.stream(), {"l", "x_of_l", "revenue_at_x", "revenue_at_1"});
  for (double l : ls) {
    if (!(l >= 0.0 && l <= 1.0)) throw ValidationError("l values must lie in [0, 1]");
    const double x = optimal_ratio(l, inst.distribution);
    csv.row(l, x, revenue_at_ratio(l, x, inst.distribution), revenue_at_ratio(l, 1.0, inst.distribution));
  }
  return kExitOk;
}

// --------------------------------------------------------------------------
// bound: worst-case share of suboptimal signals for the geometric scheme.

inline int cmd_bound(const GlobalOptions& g, std::ostream& out, std::ostream& err) {
  const auto inst = detail::require_instance(g);
  const RatioAnalysis analysis(inst.distribution);
  const Convexity conv = analysis.check_convexity();
  detail::Output sink(g.out, out);
  CsvWriter csv(sink.stream(), {"convexity", "K0", "l_k", "x_at_l_k", "S", "z_star", "approx"});
  if (conv != Convexity::convex) {
    const double nan = std::nan("");
    csv.row(convexity_name(conv), std::string(), nan, nan, nan, nan, nan);
    err << "error: the worst-case bound needs x(l) to be convex; it is " << convexity_name(conv) << '\n';
    return kExitValidation;
  }
  const BoundReport b = analysis.worst_case_bound();
  csv.row(convexity_name(b.convexity), detail::optional_int(b.k0), b.l_k, b.x_at_l_k, b.s, b.z_star, b.approx);
  return kExitOk;
}

// --------------------------------------------------------------------------
// construct: geometric calibrated scheme for a symmetric two-bidder prior.

inline Json construction_to_json(const SymmetricConstruction& c) {
  Json pairs = Json::array();
  for (const auto& p : c.pairs) {
    Json rec{{"high_state", p.high_state}, {"mass", p.mass}};
    rec["report"] = p.report ? report_to_json(*p.report) : Json(nullptr);
    pairs.push_back(std::move(rec));
  }
  return Json{{"scheme", scheme_to_json(c.scheme)},
              {"revenue", c.revenue},
              {"upper_bound", c.upper_bound},
              {"pairs", std::move(pairs)}};
}

inline int cmd_construct(const GlobalOptions& g, std::ostream& out, std::ostream& err) {
  const auto inst = detail::require_instance(g);
  const auto c = construct_symmetric(inst.prior, inst.distribution);
  detail::Output sink(g.out, out);
  sink.stream() << construction_to_json(c).dump(2) << '\n';
  if (!g.quiet && !g.out.empty()) {
    err << "revenue " << format_double(c.revenue) << ", upper bound " << format_double(c.upper_bound) << '\n';
  }
  return kExitOk;
}

// --------------------------------------------------------------------------
// fptas: grid LP over calibrated schemes.

struct FptasCliOptions {
  double epsilon = 0.1;
  std::optional<double> reserve;
  std::string out_scheme;
  std::string report;
  std::string rule = "dantzig";
  std::size_t mc_samples = 1000000;
  std::uint64_t mc_seed = 0x5eed5eedULL;
};

inline int cmd_fptas(const GlobalOptions& g, const FptasCliOptions& o, std::ostream& out) {
  const auto inst = detail::require_instance(g);
  FptasOptions opt;
  opt.reserve = o.reserve.value_or(inst.reserve);
  if (!(opt.reserve >= 0.0)) throw ValidationError("reserve price must be >= 0");
  opt.mc_samples = o.mc_samples;
  opt.mc_seed = o.mc_seed;
  opt.simplex.rule = o.rule == "bland" ? PivotRule::bland : PivotRule::dantzig;
  const auto res = fptas_solve(inst.prior, inst.distribution, o.epsilon, opt);
  if (!o.out_scheme.empty()) {
    std::ofstream f(o.out_scheme, std::ios::binary);
    if (!f) throw ValidationError("cannot write '" + o.out_scheme + "'");
    f << scheme_to_json(res.scheme).dump(2) << '\n';
  }
  detail::Output sink(o.report.empty() ? g.out : o.report, out);
  CsvWriter csv(sink.stream(), {"epsilon", "variables", "rows", "objective", "max_calibration_residual", "solve_ms"});
  csv.row(res.grid.eps, res.variables, res.rows, res.objective, res.max_calibration_residual, res.solve_ms);
  return kExitOk;
}

// --------------------------------------------------------------------------
// simulate: Monte Carlo revenue and empirical calibration.

struct SimulateOptions {
  std::size_t samples = 1000000;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
  std::string scheme;
  bool calibration = false;
  bool record_clicks = false;
  std::optional<double> reserve;
};

inline int cmd_simulate(const GlobalOptions& g, const SimulateOptions& o, std::ostream& out, std::ostream& err) {
  if (!o.seed) throw ValidationError("--seed is required so that runs are reproducible");
  const auto inst = detail::require_instance(g);
  const SignalingScheme sch = o.scheme.empty() ? full_revelation_scheme(inst.prior) : load_scheme(o.scheme);
  const auto validity = check_validity(sch, inst.prior, 1e-9);
  if (!validity.valid) {
    for (const auto& p : validity.problems) err << "error: " << p << '\n';
    return kExitValidation;
  }
  SimulationConfig cfg;
  cfg.samples = o.samples;
  cfg.seed = *o.seed;
  cfg.workers = o.workers;
  cfg.record_clicks = o.record_clicks;
  cfg.reserve = o.reserve.value_or(inst.reserve);
  const auto rep = simulate(inst.prior, sch, inst.distribution, cfg);
  detail::Output sink(g.out, out);
  CsvWriter csv(sink.stream(), {"mean", "stderr", "samples", "seconds"});
  csv.row(rep.revenue.mean, rep.revenue.std_error, rep.revenue.samples, rep.revenue.seconds);
  if (o.calibration) {
    sink.stream() << '\n';
    CsvWriter cal(sink.stream(), {"bidder", "signal", "mean_ctr", "stderr", "count", "consistent"});
    for (const auto& c : rep.calibration) {
      cal.row(c.bidder, c.signal, c.mean_ctr, c.std_error, c.count, c.consistent() ? 1 : 0);
    }
  }
  if (o.record_clicks && !g.quiet) {
    err << "realised clicks " << rep.revenue.clicks << ", realised revenue per round "
        << format_double(rep.revenue.realized_revenue) << '\n';
  }
  return kExitOk;
}

// --------------------------------------------------------------------------
// audit: per-signal calibration residuals of a scheme file.

struct AuditOptions {
  std::string scheme;
  double tolerance = 1e-9;
};

inline int cmd_audit(const GlobalOptions& g, const AuditOptions& o, std::ostream& out, std::ostream& err) {
  if (o.scheme.empty()) throw ValidationError("--scheme PATH is required for audit");
  if (!(o.tolerance > 0.0)) throw ValidationError("--tol must be positive");
  const auto sch = load_scheme(o.scheme);
  int status = kExitOk;
  if (!g.instance.empty()) {
    const auto inst = load_instance(g.instance);
    const auto validity = check_validity(sch, inst.prior, o.tolerance);
    for (const auto& p : validity.problems) err << "invalid: " << p << '\n';
    if (!validity.valid) status = kExitValidation;
  }
  const auto residuals = calibration_residuals(sch);
  detail::Output sink(g.out, out);
  CsvWriter csv(sink.stream(), {"bidder", "signal", "residual", "mass"});
  for (const auto& r : residuals) {
    csv.row(r.bidder, r.signal, r.residual, r.mass);
    if (std::abs(r.residual) > o.tolerance) {
      err << "miscalibrated: bidder " << r.bidder << ", signal " << format_double(r.signal) << ", residual "
          << format_double(r.residual) << '\n';
      status = kExitValidation;
    }
  }
  return status;
}

// --------------------------------------------------------------------------

/// Runs the tool on `args` (without the program name). Output goes to `out`
/// unless --out redirects it; diagnostics go to `err`.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Calibrated signaling for click-through auctions", "calibra"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--instance", g.instance, "Instance JSON file");
  app.add_option("--out", g.out, "Write the main output here instead of stdout");
  app.add_flag("--quiet", g.quiet, "Suppress warnings and progress messages");

  RatioOptions ratio;
  auto* c_ratio = app.add_subcommand("ratio", "Tabulate the optimal signal ratio x(l) and its revenue");
  c_ratio->add_option("--l", ratio.l_values, "CTR ratio values to tabulate (repeatable)");
  c_ratio->add_option("--points", ratio.points, "Evenly spaced l values on [0, 1] when --l is absent")
      ->capture_default_str();

  auto* c_bound = app.add_subcommand("bound", "Worst-case suboptimal share of the geometric construction");

  auto* c_construct = app.add_subcommand("construct", "Geometric calibrated scheme for a symmetric prior");

  FptasCliOptions fopt;
  auto* c_fptas = app.add_subcommand("fptas", "Solve the discretised signaling LP");
  c_fptas->add_option("--epsilon", fopt.epsilon, "Grid resolution")->capture_default_str();
  c_fptas->add_option("--reserve", fopt.reserve, "Reserve price (overrides the instance)");
  c_fptas->add_option("--out-scheme", fopt.out_scheme, "Write the scheme JSON here");
  c_fptas->add_option("--report", fopt.report, "Write the CSV report row here");
  c_fptas->add_option("--rule", fopt.rule, "Simplex pivot rule")
      ->check(CLI::IsMember({"dantzig", "bland"}))
      ->capture_default_str();
  c_fptas->add_option("--mc-samples", fopt.mc_samples, "Monte Carlo samples per LP coefficient (n >= 3)")
      ->capture_default_str();
  c_fptas->add_option("--mc-seed", fopt.mc_seed, "Monte Carlo seed (n >= 3)");

  SimulateOptions sopt;
  auto* c_sim = app.add_subcommand("simulate", "Monte Carlo revenue and calibration of a scheme");
  c_sim->add_option("--samples", sopt.samples, "Number of auction rounds")->capture_default_str();
  c_sim->add_option("--seed", sopt.seed, "Random seed (required)");
  c_sim->add_option("--workers", sopt.workers, "Worker threads")->capture_default_str();
  c_sim->add_option("--scheme", sopt.scheme, "Scheme JSON (default: full revelation)");
  c_sim->add_flag("--calibration", sopt.calibration, "Append the per-signal calibration table");
  c_sim->add_flag("--record-clicks", sopt.record_clicks, "Also draw realised clicks");
  c_sim->add_option("--reserve", sopt.reserve, "Reserve price (overrides the instance)");

  AuditOptions aopt;
  auto* c_audit = app.add_subcommand("audit", "Calibration residuals of a scheme file");
  c_audit->add_option("--scheme", aopt.scheme, "Scheme JSON");
  c_audit->add_option("--tol", aopt.tolerance, "Largest acceptable residual")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  set_warning_handler(g.quiet ? WarningHandler{} : WarningHandler{[&err](const std::string& m) {
    err << "warning: " << m << '\n';
  }});
  struct RestoreWarnings {
    ~RestoreWarnings() {
      set_warning_handler([](const std::string& m) { std::cerr << "warning: " << m << '\n'; });
    }
  } restore;

  try {
    detail::apply_environment();
    if (c_ratio->parsed()) return cmd_ratio(g, ratio, out);
    if (c_bound->parsed()) return cmd_bound(g, out, err);
    if (c_construct->parsed()) return cmd_construct(g, out, err);
    if (c_fptas->parsed()) return cmd_fptas(g, fopt, out);
    if (c_sim->parsed()) return cmd_simulate(g, sopt, out, err);
    if (c_audit->parsed()) return cmd_audit(g, aopt, out, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitOther;
  }
  return kExitOther;
}

}  // namespace calibra::cli
