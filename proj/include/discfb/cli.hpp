#pragma once

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "discfb/blowup.hpp"
#include "discfb/io.hpp"
#include "discfb/parallel.hpp"
#include "discfb/profiles.hpp"
#include "discfb/solver.hpp"
#include "discfb/spruck.hpp"

namespace discfb::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kNumerical = 2 };

namespace fs = std::filesystem;
using io::json;

// ---------------------------------------------------------------------------
// solve

inline int cmd_solve(const fs::path& config_path, std::ostream& log = std::cerr) {
  io::RunConfig rc;
  try {
    rc = io::load_run_config(config_path);
  } catch (const Error& e) {
    log << "config error: " << e.what() << "\n";
    return kUsage;
  }
  const fs::path dir(rc.output.dir);
  const fs::path base = dir / rc.output.prefix;
  json report;
  int status = kOk;
  try {
    const Solution sol = solve(rc.solve);
    report = io::solution_report_json(sol);
    io::write_field(base.string() + ".csv", sol.field);
    io::write_text(base.string() + ".free_boundary.csv", io::free_boundary_csv(sol.free_boundary));
  } catch (const ConvergenceError& e) {
    report["schema_version"] = io::kSchemaVersion;
    report["status"] = "failed";
    report["error"] = e.what();
    report["failed_stage"] = e.stage();
    report["iteration_log"] = io::iteration_log_json(e.log());
    log << "solver failure: " << e.what() << "\n";
    status = kNumerical;
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    report["schema_version"] = io::kSchemaVersion;
    report["status"] = "failed";
    report["error"] = e.what();
    log << "numerical failure: " << e.what() << "\n";
    status = kNumerical;
  }
  report["config"] = io::solve_config_json(rc.solve);
  report["seed"] = rc.seed;
  try {
    io::write_json(base.string() + ".report.json", report);
  } catch (const Error& e) {
    log << "output error: " << e.what() << "\n";
    return kUsage;
  }
  return status;
}

// ---------------------------------------------------------------------------
// analyze

struct AnalysisOptions {
  std::optional<int> k_max;
  std::vector<int> k_values;  // blow-up radii 2^-k; empty: 2..6 clipped to the grid
  double window_lo = 0.25;
  double tolerance = 1e-3;
  double degeneracy_threshold = 1e-6;
  std::optional<double> beta;
};

inline AnalysisOptions parse_analysis_options(const json& j) {
  io::require_keys(j, "analysis config",
                   {"schema_version", "k_max", "k_values", "window_lo", "tolerance", "degeneracy_threshold", "beta"});
  AnalysisOptions o;
  if (j.contains("k_max")) o.k_max = io::get_or<int>(j, "k_max", 0, "analysis");
  o.k_values = io::get_or<std::vector<int>>(j, "k_values", {}, "analysis");
  o.window_lo = io::get_or<double>(j, "window_lo", o.window_lo, "analysis");
  o.tolerance = io::get_or<double>(j, "tolerance", o.tolerance, "analysis");
  o.degeneracy_threshold = io::get_or<double>(j, "degeneracy_threshold", o.degeneracy_threshold, "analysis");
  if (j.contains("beta")) o.beta = io::get_or<double>(j, "beta", 0.0, "analysis");
  return o;
}

/// Deepest dyadic level 2^-k that still lies inside the grid.
inline int resolvable_k(const PolarGrid& g) {
  return static_cast<int>(std::floor(-std::log2(g.r_min()) * (1.0 + 1e-12)));
}

inline int cmd_analyze(const fs::path& field_path, const std::string& analysis, const AnalysisOptions& opt,
                       const std::optional<fs::path>& out_dir, std::ostream& log = std::cerr) {
  if (analysis != "blowup" && analysis != "growth" && analysis != "spruck") {
    log << "unknown analysis '" << analysis << "' (blowup | growth | spruck)\n";
    return kUsage;
  }
  std::optional<PolarField> field;
  try {
    field.emplace(io::read_field(field_path));
    if (field->meta().quantity != Quantity::V) throw ConfigError("analysis needs a v-field");
  } catch (const Error& e) {
    log << "artifact error: " << e.what() << "\n";
    return kUsage;
  }
  const fs::path dir = out_dir ? *out_dir : field_path.parent_path();
  const fs::path base = dir / (field_path.stem().string() + "." + analysis);
  try {
    const double beta = opt.beta ? *opt.beta : field->require_beta();
    const int k_max = opt.k_max ? *opt.k_max : resolvable_k(field->grid());
    json report;
    std::string csv;
    if (analysis == "growth") {
      const DyadicReport rep = dyadic_sup(*field, k_max, opt.degeneracy_threshold);
      report = io::dyadic_json(rep);
      csv = io::dyadic_csv(rep);
    } else if (analysis == "blowup") {
      std::vector<int> ks = opt.k_values;
      if (ks.empty()) {
        for (int k = 2; k <= std::min(6, k_max - 1); ++k) ks.push_back(k);
      }
      const BlowupReport rep = blowup_sequence(*field, beta, ks, opt.window_lo, opt.tolerance);
      const DyadicReport dy = dyadic_sup(*field, k_max, opt.degeneracy_threshold);
      report = io::blowup_json(rep);
      report["degenerate"] = dy.degenerate;
      report["degenerate_at"] = dy.degenerate_at ? json(*dy.degenerate_at) : json(nullptr);
      report["degeneracy_threshold"] = dy.degeneracy_threshold;
      csv = io::blowup_csv(rep);
    } else {
      const MonitorReport rep = spruck_functional(*field, beta);
      report = io::monitor_json(rep);
      csv = io::monitor_csv(rep);
    }
    report["source"] = field_path.filename().string();
    io::write_json(base.string() + ".json", report);
    io::write_text(base.string() + ".csv", csv);
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    log << "analysis failure: " << e.what() << "\n";
    return kNumerical;
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// profile

inline int cmd_profile(double p, double epsilon, const std::string& method, double step, const fs::path& out_dir,
                       const std::string& prefix, std::ostream& log = std::cerr) {
  try {
    HomogeneousProfile prof;
    if (method == "closed") {
      if (p != 0.0) throw ParameterRangeError("the closed form exists for p = 0 only");
      prof = closed_form_p0(epsilon);
    } else if (method == "ode") {
      prof = ode_integrate(p, epsilon, step);
    } else if (method == "quadrature") {
      prof = quadrature_profile(p, epsilon);
    } else {
      log << "unknown method '" << method << "' (closed | ode | quadrature)\n";
      return kUsage;
    }
    const double energy = energy_identity_residual(prof);
    const fs::path base = out_dir / prefix;
    io::write_text(base.string() + ".csv", io::profile_csv(prof));
    io::write_json(base.string() + ".json", io::profile_json(prof, energy));
  } catch (const ParameterRangeError& e) {
    log << "range error: " << e.what() << "\n";
    return kUsage;
  } catch (const EllipticityError& e) {
    log << "range error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    log << "output error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    log << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// scan

/// eps_min, eps_min + step, ..., built from integer multiples of the step
/// when the endpoints are on the lattice, so that 0 is hit exactly.
inline std::vector<double> epsilon_lattice(double lo, double hi, double step) {
  if (!(step > 0.0) || !(hi >= lo)) throw ParameterRangeError("scan needs step > 0 and eps_max >= eps_min");
  const double k0 = std::round(lo / step);
  const bool aligned = std::abs(k0 * step - lo) <= 1e-9 * step;
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> grid(n);
  for (std::size_t k = 0; k < n; ++k) {
    grid[k] = aligned ? (k0 + static_cast<double>(k)) * step : lo + static_cast<double>(k) * step;
  }
  return grid;
}

inline int cmd_scan(double lo, double hi, double step, const fs::path& out_dir, const std::string& prefix,
                    std::ostream& log = std::cerr) {
  try {
    const RigidityReport rep = rigidity_scan(epsilon_lattice(lo, hi, step));
    io::write_json(out_dir / (prefix + ".json"), io::rigidity_json(rep));
  } catch (const ParameterRangeError& e) {
    log << "range error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    log << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kOk;
}

// ---------------------------------------------------------------------------

inline int run(int argc, char** argv) {
  CLI::App app{"Free-boundary solver and analysis toolkit for a_ij d_ij v = v^p"};
  app.require_subcommand(1);
  unsigned threads = 0;
  app.add_option("--threads", threads, "Cap on worker threads (0: hardware default)");

  auto* solve_cmd = app.add_subcommand("solve", "Run the penalized solver from a JSON config");
  std::string config;
  solve_cmd->add_option("config", config, "Solve configuration (JSON)")->required();

  auto* analyze_cmd = app.add_subcommand("analyze", "Analyze a solution field");
  std::string field_path;
  std::string analysis;
  std::string analysis_config;
  std::string analyze_out;
  std::optional<int> k_max;
  analyze_cmd->add_option("field", field_path, "Field CSV (sidecar alongside)")->required();
  analyze_cmd->add_option("--analysis,-a", analysis, "blowup | growth | spruck")->required();
  analyze_cmd->add_option("--config", analysis_config, "Analysis options (JSON)");
  analyze_cmd->add_option("--k-max", k_max, "Deepest dyadic level");
  analyze_cmd->add_option("--out", analyze_out, "Output directory (default: next to the field)");

  auto* profile_cmd = app.add_subcommand("profile", "Construct a homogeneous profile");
  double p = 0.0;
  double eps = 0.0;
  std::string method = "closed";
  double step = 1e-4;
  std::string profile_out = ".";
  std::string profile_prefix = "profile";
  profile_cmd->add_option("--p", p, "Exponent p in [0, 1)");
  profile_cmd->add_option("--epsilon", eps, "Coefficient jump epsilon");
  profile_cmd->add_option("--method", method, "closed | ode | quadrature");
  profile_cmd->add_option("--step", step, "ODE step");
  profile_cmd->add_option("--out", profile_out, "Output directory");
  profile_cmd->add_option("--prefix", profile_prefix, "Output file prefix");

  auto* scan_cmd = app.add_subcommand("scan", "Integer scan of the cone frequency over epsilon");
  double lo = -0.4;
  double hi = 0.4;
  double scan_step = 1e-4;
  std::string scan_out = ".";
  std::string scan_prefix = "rigidity";
  scan_cmd->add_option("--eps-min", lo, "Lower end of the epsilon grid");
  scan_cmd->add_option("--eps-max", hi, "Upper end of the epsilon grid");
  scan_cmd->add_option("--step", scan_step, "Grid spacing");
  scan_cmd->add_option("--out", scan_out, "Output directory");
  scan_cmd->add_option("--prefix", scan_prefix, "Output file prefix");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  if (threads > 0) set_max_threads(threads);

  if (*solve_cmd) return cmd_solve(config);
  if (*analyze_cmd) {
    AnalysisOptions opt;
    if (!analysis_config.empty()) {
      try {
        opt = parse_analysis_options(io::parse_json(io::read_text(analysis_config), analysis_config));
      } catch (const Error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kUsage;
      }
    }
    if (k_max) opt.k_max = k_max;
    std::optional<fs::path> out;
    if (!analyze_out.empty()) out = fs::path(analyze_out);
    return cmd_analyze(field_path, analysis, opt, out);
  }
  if (*profile_cmd) return cmd_profile(p, eps, method, step, profile_out, profile_prefix);
  if (*scan_cmd) return cmd_scan(lo, hi, scan_step, scan_out, scan_prefix);
  return kUsage;
}

}  // namespace discfb::cli
