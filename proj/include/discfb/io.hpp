#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "discfb/blowup.hpp"
#include "discfb/errors.hpp"
#include "discfb/grid.hpp"
#include "discfb/profiles.hpp"
#include "discfb/solver.hpp"
#include "discfb/spruck.hpp"

namespace discfb::io {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

/// Decimal text that reads back to the same double.
inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("write failed: " + path.string());
}

/// Parses JSON text; syntax errors become ConfigError with line and column.
inline json parse_json(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    std::size_t col = 1;
    const std::size_t stop = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    for (std::size_t k = 0; k < stop; ++k) {
      if (text[k] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(origin + ":" + std::to_string(line) + ":" + std::to_string(col) + ": malformed JSON");
  }
}

inline void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// Strict object access: every key must be consumed or listed.

inline void require_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& item : obj.items()) {
    if (!ok.count(item.key())) throw ConfigError(where + ": unknown key '" + item.key() + "'");
  }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

// ---------------------------------------------------------------------------
// Enumerations

inline std::string spacing_name(RadialSpacing s) { return s == RadialSpacing::Logarithmic ? "log" : "uniform"; }
inline RadialSpacing parse_spacing(const std::string& s) {
  if (s == "log") return RadialSpacing::Logarithmic;
  if (s == "uniform") return RadialSpacing::Uniform;
  throw ConfigError("unknown grid spacing '" + s + "' (log | uniform)");
}

inline std::string boundary_name(BoundaryKind k) {
  switch (k) {
    case BoundaryKind::Zero: return "zero";
    case BoundaryKind::HomogeneousProfile: return "homogeneous_profile";
    case BoundaryKind::DiscreteProfile: return "discrete_profile";
    case BoundaryKind::HalfPlane: return "half_plane";
    case BoundaryKind::Tabulated: return "tabulated";
  }
  return "zero";
}
inline BoundaryKind parse_boundary(const std::string& s) {
  for (auto k : {BoundaryKind::Zero, BoundaryKind::HomogeneousProfile, BoundaryKind::DiscreteProfile,
                 BoundaryKind::HalfPlane, BoundaryKind::Tabulated}) {
    if (boundary_name(k) == s) return k;
  }
  throw ConfigError("unknown boundary kind '" + s + "'");
}

inline std::string inner_name(InnerBoundary b) { return b == InnerBoundary::Homogeneous ? "homogeneous" : "zero"; }
inline InnerBoundary parse_inner(const std::string& s) {
  if (s == "homogeneous") return InnerBoundary::Homogeneous;
  if (s == "zero") return InnerBoundary::Zero;
  throw ConfigError("unknown inner boundary '" + s + "' (homogeneous | zero)");
}

inline std::string method_name(FreeBoundaryMethod m) {
  return m == FreeBoundaryMethod::RootExtrapolation ? "root_extrapolation" : "threshold";
}
inline FreeBoundaryMethod parse_method(const std::string& s) {
  if (s == "root_extrapolation") return FreeBoundaryMethod::RootExtrapolation;
  if (s == "threshold") return FreeBoundaryMethod::Threshold;
  throw ConfigError("unknown free-boundary method '" + s + "'");
}

inline std::string model_name(ModelKind k) {
  switch (k) {
    case ModelKind::Identity: return "identity";
    case ModelKind::Planar2D: return "planar2d";
    case ModelKind::RadialND: return "radial_nd";
  }
  return "planar2d";
}

// ---------------------------------------------------------------------------
// Fields: CSV "t_or_r,theta,value" plus a JSON sidecar.

inline std::filesystem::path sidecar_path(const std::filesystem::path& csv) {
  std::filesystem::path p = csv;
  return p.replace_extension(".meta.json");
}

inline json field_meta_json(const PolarField& f) {
  const PolarGrid& g = f.grid();
  const FieldMeta& m = f.meta();
  json j;
  j["schema_version"] = kSchemaVersion;
  j["spacing"] = spacing_name(g.spacing());
  j["n_r"] = g.n_r();
  j["n_theta"] = g.n_theta();
  j["r_min"] = g.r_min();
  j["r_max"] = g.r_max();
  j["radial_step"] = g.radial_step();
  j["quantity"] = m.quantity == Quantity::V ? "v" : "w";
  j["p"] = m.p ? json(*m.p) : json(nullptr);
  j["epsilon"] = m.epsilon ? json(*m.epsilon) : json(nullptr);
  j["beta"] = m.beta ? json(*m.beta) : json(nullptr);
  j["description"] = m.description;
  j["first_valid_row"] = m.first_valid_row;
  j["last_valid_row"] = m.last_valid_row;
  return j;
}

inline void write_field(const std::filesystem::path& csv, const PolarField& f) {
  const PolarGrid& g = f.grid();
  std::string out = "t_or_r,theta,value\n";
  out.reserve(out.size() + g.size() * 64);
  for (std::size_t i = 0; i < g.n_r(); ++i) {
    const std::string radial = fmt(g.primary()[i]);
    for (std::size_t j = 0; j < g.n_theta(); ++j) {
      out += radial;
      out += ',';
      out += fmt(g.theta(j));
      out += ',';
      out += fmt(f(i, j));
      out += '\n';
    }
  }
  write_text(csv, out);
  write_json(sidecar_path(csv), field_meta_json(f));
}

inline std::optional<double> opt_number(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

inline PolarField read_field(const std::filesystem::path& csv) {
  const std::filesystem::path meta_path = sidecar_path(csv);
  const json meta = parse_json(read_text(meta_path), meta_path.string());
  FieldMeta m;
  RadialSpacing spacing;
  std::size_t n_r;
  std::size_t n_t;
  try {
    if (meta.at("schema_version").get<int>() != kSchemaVersion) throw ConfigError("unsupported schema_version");
    spacing = parse_spacing(meta.at("spacing").get<std::string>());
    n_r = meta.at("n_r").get<std::size_t>();
    n_t = meta.at("n_theta").get<std::size_t>();
    m.p = opt_number(meta, "p");
    m.epsilon = opt_number(meta, "epsilon");
    m.beta = opt_number(meta, "beta");
    const std::string q = meta.at("quantity").get<std::string>();
    if (q != "v" && q != "w") throw ConfigError("quantity must be v or w");
    m.quantity = q == "v" ? Quantity::V : Quantity::W;
    m.description = meta.value("description", std::string{});
    m.first_valid_row = meta.at("first_valid_row").get<std::size_t>();
    m.last_valid_row = meta.at("last_valid_row").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ConfigError(meta_path.string() + ": corrupt field metadata (" + e.what() + ")");
  }

  std::ifstream in(csv);
  if (!in) throw ConfigError("cannot open " + csv.string());
  std::string line;
  if (!std::getline(in, line) || line != "t_or_r,theta,value") {
    throw ConfigError(csv.string() + ": missing header t_or_r,theta,value");
  }
  std::vector<double> primary(n_r);
  std::vector<double> values(n_r * n_t);
  std::size_t count = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (count >= values.size()) throw ConfigError(csv.string() + ": more rows than the sidecar declares");
    double c[3];
    std::size_t pos = 0;
    for (int k = 0; k < 3; ++k) {
      const std::size_t end = k < 2 ? line.find(',', pos) : line.size();
      if (end == std::string::npos) throw ConfigError(csv.string() + ": malformed row " + std::to_string(count + 2));
      try {
        std::size_t used = 0;
        const std::string cell = line.substr(pos, end - pos);
        c[k] = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw ConfigError(csv.string() + ": malformed number in row " + std::to_string(count + 2));
      }
      pos = end + 1;
    }
    const std::size_t i = count / n_t;
    if (count % n_t == 0) {
      primary[i] = c[0];
    } else if (c[0] != primary[i]) {
      throw ConfigError(csv.string() + ": radial coordinate changes inside a row block");
    }
    values[count] = c[2];
    ++count;
  }
  if (count != values.size()) throw ConfigError(csv.string() + ": fewer rows than the sidecar declares");
  try {
    return PolarField(PolarGrid::from_primary(spacing, std::move(primary), n_t), std::move(values), std::move(m));
  } catch (const GridError& e) {
    throw ConfigError(csv.string() + ": " + e.what());
  } catch (const ParameterRangeError& e) {
    throw ConfigError(csv.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Solve configuration

struct OutputSpec {
  std::string dir = "out";
  std::string prefix = "solution";
};

struct RunConfig {
  SolveConfig solve;
  OutputSpec output;
  std::uint64_t seed = 0;
};

inline SolveConfig parse_solve_config(const json& j, std::initializer_list<const char*> extra = {}) {
  std::vector<const char*> keys{"schema_version", "model",  "p",     "grid", "boundary", "penalty_schedule",
                                "tolerances",     "inner", "kappa", "free_boundary_method"};
  keys.insert(keys.end(), extra.begin(), extra.end());
  if (!j.is_object()) throw ConfigError("config: expected an object");
  for (const auto& item : j.items()) {
    if (std::find_if(keys.begin(), keys.end(), [&](const char* k) { return item.key() == k; }) == keys.end()) {
      throw ConfigError("config: unknown key '" + item.key() + "'");
    }
  }
  if (get_or<int>(j, "schema_version", kSchemaVersion, "config") != kSchemaVersion) {
    throw ConfigError("config: unsupported schema_version");
  }
  SolveConfig c;
  try {
    if (j.contains("model")) {
      const json& m = j.at("model");
      require_keys(m, "model", {"kind", "epsilon", "n"});
      const std::string kind = get_or<std::string>(m, "kind", "planar2d", "model");
      const double eps = get_or<double>(m, "epsilon", 0.0, "model");
      if (kind == "planar2d") {
        c.model = CoefficientModel::planar(eps);
      } else if (kind == "identity") {
        c.model = CoefficientModel::identity(get_or<int>(m, "n", 2, "model"));
      } else if (kind == "radial_nd") {
        c.model = CoefficientModel::radial(get_or<int>(m, "n", 2, "model"), eps);
      } else {
        throw ConfigError("model.kind: unknown model '" + kind + "'");
      }
    }
  } catch (const EllipticityError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  } catch (const ParameterRangeError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  c.p = get_or<double>(j, "p", c.p, "config");
  if (j.contains("grid")) {
    const json& g = j.at("grid");
    require_keys(g, "grid", {"spacing", "n_r", "n_theta", "r_min"});
    c.grid.spacing = parse_spacing(get_or<std::string>(g, "spacing", spacing_name(c.grid.spacing), "grid"));
    c.grid.n_r = get_or<std::size_t>(g, "n_r", c.grid.n_r, "grid");
    c.grid.n_theta = get_or<std::size_t>(g, "n_theta", c.grid.n_theta, "grid");
    c.grid.r_min = get_or<double>(g, "r_min", c.grid.r_min, "grid");
  }
  if (j.contains("boundary")) {
    const json& b = j.at("boundary");
    require_keys(b, "boundary", {"kind", "scale", "rotation", "theta", "g", "ode_step"});
    c.boundary.kind = parse_boundary(get_or<std::string>(b, "kind", "zero", "boundary"));
    c.boundary.scale = get_or<double>(b, "scale", c.boundary.scale, "boundary");
    c.boundary.rotation = get_or<double>(b, "rotation", c.boundary.rotation, "boundary");
    c.boundary.theta = get_or<std::vector<double>>(b, "theta", {}, "boundary");
    c.boundary.g = get_or<std::vector<double>>(b, "g", {}, "boundary");
    c.boundary.ode_step = get_or<double>(b, "ode_step", c.boundary.ode_step, "boundary");
  }
  c.penalty_schedule = get_or<std::vector<double>>(j, "penalty_schedule", c.penalty_schedule, "config");
  if (j.contains("tolerances")) {
    const json& t = j.at("tolerances");
    require_keys(t, "tolerances", {"residual_tol", "max_iters", "damping"});
    c.tolerances.residual_tol = get_or<double>(t, "residual_tol", c.tolerances.residual_tol, "tolerances");
    c.tolerances.max_iters = get_or<int>(t, "max_iters", c.tolerances.max_iters, "tolerances");
    c.tolerances.damping = get_or<double>(t, "damping", c.tolerances.damping, "tolerances");
  }
  c.inner = parse_inner(get_or<std::string>(j, "inner", inner_name(c.inner), "config"));
  c.kappa = get_or<double>(j, "kappa", c.kappa, "config");
  c.free_boundary_method =
      parse_method(get_or<std::string>(j, "free_boundary_method", method_name(c.free_boundary_method), "config"));
  c.validate();
  return c;
}

inline json solve_config_json(const SolveConfig& c) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["model"] = {{"kind", model_name(c.model.kind())},
                {"epsilon", c.model.epsilon()},
                {"n", c.model.dimension()}};
  j["p"] = c.p;
  j["grid"] = {{"spacing", spacing_name(c.grid.spacing)},
               {"n_r", c.grid.n_r},
               {"n_theta", c.grid.n_theta},
               {"r_min", c.grid.r_min}};
  json b = {{"kind", boundary_name(c.boundary.kind)},
            {"scale", c.boundary.scale},
            {"rotation", c.boundary.rotation},
            {"ode_step", c.boundary.ode_step}};
  if (c.boundary.kind == BoundaryKind::Tabulated) {
    b["theta"] = c.boundary.theta;
    b["g"] = c.boundary.g;
  }
  j["boundary"] = b;
  j["penalty_schedule"] = c.penalty_schedule;
  j["tolerances"] = {{"residual_tol", c.tolerances.residual_tol},
                     {"max_iters", c.tolerances.max_iters},
                     {"damping", c.tolerances.damping}};
  j["inner"] = inner_name(c.inner);
  j["kappa"] = c.kappa;
  j["free_boundary_method"] = method_name(c.free_boundary_method);
  return j;
}

inline RunConfig parse_run_config(const json& j) {
  RunConfig rc;
  rc.solve = parse_solve_config(j, {"output", "seed"});
  if (j.contains("output")) {
    const json& o = j.at("output");
    require_keys(o, "output", {"dir", "prefix"});
    rc.output.dir = get_or<std::string>(o, "dir", rc.output.dir, "output");
    rc.output.prefix = get_or<std::string>(o, "prefix", rc.output.prefix, "output");
  }
  rc.seed = get_or<std::uint64_t>(j, "seed", 0, "config");
  return rc;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(parse_json(read_text(path), path.string()));
}

// ---------------------------------------------------------------------------
// Reports

inline json iteration_log_json(const std::vector<IterationRecord>& log) {
  json a = json::array();
  for (const auto& r : log) {
    a.push_back({{"stage", r.stage},
                 {"iteration", r.iteration},
                 {"delta", r.delta},
                 {"residual", r.residual},
                 {"step_norm", r.step_norm},
                 {"damping", r.damping},
                 {"repairs", r.repairs},
                 {"method", r.method}});
  }
  return a;
}

inline json solution_report_json(const Solution& s) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["status"] = "converged";
  json stages = json::array();
  int total = 0;
  for (const auto& st : s.stages) {
    stages.push_back({{"delta", st.delta},
                      {"residual", st.residual},
                      {"iterations", st.iterations},
                      {"converged", st.converged}});
    total += st.iterations;
  }
  j["stages"] = stages;
  j["iterations"] = total;
  j["positivity_fraction"] = s.positivity_fraction;
  j["monotone_continuation"] = s.monotone_continuation;
  j["min_unclamped"] = s.min_unclamped;
  json fb = json::array();
  for (const auto& row : s.free_boundary) fb.push_back({{"r", row.r}, {"arc", row.arc}, {"angles", row.angles}});
  j["free_boundary"] = fb;
  j["warnings"] = s.warnings;
  return j;
}

inline std::string free_boundary_csv(const std::vector<FreeBoundaryRow>& rows) {
  std::string out = "r,angle\n";
  for (const auto& row : rows) {
    for (double a : row.angles) out += fmt(row.r) + "," + fmt(a) + "\n";
  }
  return out;
}

inline json dyadic_json(const DyadicReport& r) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["k_values"] = r.k_values;
  j["S_values"] = r.S_values;
  j["beta"] = r.beta;
  j["M"] = r.M;
  j["C"] = r.C;
  j["fitted_beta"] = r.fitted_beta ? json(*r.fitted_beta) : json(nullptr);
  j["fit_window"] = {r.fit_window.first, r.fit_window.second};
  j["degenerate"] = r.degenerate;
  j["degenerate_at"] = r.degenerate_at ? json(*r.degenerate_at) : json(nullptr);
  j["degeneracy_threshold"] = r.degeneracy_threshold;
  j["degeneracy_note"] = "numerical proxy: S(k) 2^(beta k) compared against threshold * S(0)";
  return j;
}

inline std::string dyadic_csv(const DyadicReport& r) {
  std::string out = "k,S\n";
  for (std::size_t i = 0; i < r.k_values.size(); ++i) out += std::to_string(r.k_values[i]) + "," + fmt(r.S_values[i]) + "\n";
  return out;
}

inline json blowup_json(const BlowupReport& r) {
  json j;
  j["schema_version"] = kSchemaVersion;
  json steps = json::array();
  for (const auto& s : r.steps) {
    steps.push_back({{"k", s.k}, {"r", s.r}, {"deviation", s.deviation}, {"profile_change", s.profile_change}});
  }
  j["steps"] = steps;
  j["limit_profile"] = r.limit_profile;
  j["converged"] = r.converged;
  j["tolerance"] = r.tolerance;
  return j;
}

inline std::string blowup_csv(const BlowupReport& r) {
  std::string out = "r,deviation\n";
  for (const auto& s : r.steps) out += fmt(s.r) + "," + fmt(s.deviation) + "\n";
  return out;
}

inline json monitor_json(const MonitorReport& r) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["total_functional"] = r.total_functional;
  j["bound_estimate"] = r.bound_estimate;
  j["r_min"] = r.r_min;
  j["energy_residual_sup"] = r.energy_residual_sup ? json(*r.energy_residual_sup) : json(nullptr);
  json a = json::array();
  for (const auto& x : r.annuli) a.push_back({{"r_outer", x.r_outer}, {"contribution", x.contribution}});
  j["annuli"] = a;
  return j;
}

inline std::string monitor_csv(const MonitorReport& r) {
  std::string out = "r_outer,contribution,running_total\n";
  for (const auto& x : r.annuli) out += fmt(x.r_outer) + "," + fmt(x.contribution) + "," + fmt(x.running_total) + "\n";
  return out;
}

inline json profile_json(const HomogeneousProfile& p, double energy_residual) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["p"] = p.p;
  j["epsilon"] = p.epsilon;
  j["beta"] = p.beta;
  j["alpha"] = p.alpha;
  j["a_eps"] = p.a_eps ? json(*p.a_eps) : json(nullptr);
  j["omega_eps"] = p.omega_eps ? json(*p.omega_eps) : json(nullptr);
  j["provenance"] = to_string(p.provenance);
  j["energy_residual"] = energy_residual;
  j["samples"] = p.theta.size();
  return j;
}

inline std::string profile_csv(const HomogeneousProfile& p) {
  std::string out = "theta,g,gprime\n";
  for (std::size_t k = 0; k < p.theta.size(); ++k) out += fmt(p.theta[k]) + "," + fmt(p.g[k]) + "," + fmt(p.gprime[k]) + "\n";
  return out;
}

inline json rigidity_json(const RigidityReport& r) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["hit_tolerance"] = r.hit_tolerance;
  j["strictly_decreasing"] = r.strictly_decreasing;
  j["hits"] = r.hits;
  j["unique_hit"] = r.unique_hit() ? json(*r.unique_hit()) : json(nullptr);
  json roots = json::array();
  for (const auto& x : r.bracketed_roots) roots.push_back({{"k", x.k}, {"epsilon", x.epsilon}});
  j["bracketed_roots"] = roots;
  json branches = json::array();
  for (const auto& x : r.branch_roots) branches.push_back({{"k", x.k}, {"epsilon", x.epsilon}});
  j["branch_roots"] = branches;
  json table = json::array();
  for (const auto& e : r.entries) {
    table.push_back({{"epsilon", e.epsilon},
                     {"omega", e.omega},
                     {"nearest_integer", e.nearest_integer},
                     {"distance", e.distance},
                     {"hit", e.hit}});
  }
  j["entries"] = table;
  return j;
}

}  // namespace discfb::io
