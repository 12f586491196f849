#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "blowup/errors.hpp"
#include "blowup/model.hpp"

namespace blowup {

/// Everything a run needs. Serialized as flat dotted key=value text.
struct RunConfig {
  std::string scenario = "ode";
  std::string output_dir = "out";
  long long seed = 0;

  double p = 3.0;
  double a = 0.0;
  int N = 1;
  double theta = 100.0;
  double m0 = 10.0;
  double quad_rel_tol = 1e-10;

  // ode
  double ode_T = 1.0;
  double ode_t_start = 0.5;
  double ode_eps_init = 1e-8;
  double ode_rel_tol = 1e-10;
  std::string ode_seed = "zero-energy";

  // phys
  std::string phys_geometry = "line";
  double phys_dx = 1e-3;
  double phys_half_width = 1.0;
  double phys_cfl = 0.5;
  double phys_dt_nonlinear = 0.003;
  std::string phys_scheme = "rk4";
  std::string phys_ic = "constant:2";
  double phys_stop_amp = 1e6;
  int phys_levels_per_decade = 20;
  std::string phys_cone_x0 = "auto";
  double phys_export_tau = 0.3;

  // ss
  int ss_grid_n = 64;
  double ss_ds_factor = 0.4;
  double ss_s0 = 5.0;
  double ss_s1 = 20.0;
  std::string ss_ic = "kappa";
  double ss_map_mu = 0.25;
  std::string ss_gamma_form = "exact";
  double ss_c_tol = 10.0;
  std::string ss_T0 = "auto";
  std::string ss_x0 = "auto";
  double ss_shoot_band = 0.5;
  double ss_shoot_tol = 1e-3;

  // fit
  std::string fit_source = "ode";
  std::string fit_cone = "";
  double fit_window_lo = 1e-6;
  double fit_window_hi = 1e-2;
  bool fit_pin_gamma = false;

  // verify-appendix
  double appendix_u_max = 1e8;
  int appendix_per_decade = 8;

  // sweep
  std::string sweep_scenario = "fit";
  std::string sweep_axis = "model.a";
  std::string sweep_values = "";
  int sweep_threads = 0;

  ModelParams model() const {
    ModelParams m;
    m.p = p;
    m.a = a;
    m.N = N;
    return m;
  }

  bool operator==(const RunConfig&) const = default;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw ConfigError(key + ": not a number: '" + text + "'");
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError(key + ": not a number: '" + text + "'");
  }
}

inline long long parse_int(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(text, &used);
    if (used == text.size()) return i;
  } catch (const std::logic_error&) {
  }
  // integral values written in floating form, e.g. 1e3
  const double v = parse_double(key, text);
  if (v != std::floor(v) || std::fabs(v) > 9.0e15) throw ConfigError(key + ": not an integer: '" + text + "'");
  return static_cast<long long>(v);
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

struct Field {
  std::string key;
  bool numeric;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <class T>
Field field(std::string key, T RunConfig::*member) {
  Field f;
  f.key = key;
  f.numeric = !std::is_same_v<T, std::string> && !std::is_same_v<T, bool>;
  f.get = [member](const RunConfig& c) {
    if constexpr (std::is_same_v<T, std::string>) return c.*member;
    else if constexpr (std::is_same_v<T, bool>) return std::string(c.*member ? "true" : "false");
    else if constexpr (std::is_same_v<T, double>) return format_double(c.*member);
    else return std::to_string(c.*member);
  };
  f.set = [member, key](RunConfig& c, const std::string& v) {
    if constexpr (std::is_same_v<T, std::string>) c.*member = v;
    else if constexpr (std::is_same_v<T, bool>) c.*member = parse_bool(key, v);
    else if constexpr (std::is_same_v<T, double>) c.*member = parse_double(key, v);
    else {
      const long long i = parse_int(key, v);
      if (i < std::numeric_limits<T>::min() || i > std::numeric_limits<T>::max())
        throw ConfigError(key + ": out of range: '" + v + "'");
      c.*member = static_cast<T>(i);
    }
  };
  return f;
}

inline const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      field("scenario", &RunConfig::scenario),
      field("output_dir", &RunConfig::output_dir),
      field("seed", &RunConfig::seed),
      field("model.p", &RunConfig::p),
      field("model.a", &RunConfig::a),
      field("model.N", &RunConfig::N),
      field("model.theta", &RunConfig::theta),
      field("model.m0", &RunConfig::m0),
      field("quad.rel_tol", &RunConfig::quad_rel_tol),
      field("ode.T", &RunConfig::ode_T),
      field("ode.t_start", &RunConfig::ode_t_start),
      field("ode.eps_init", &RunConfig::ode_eps_init),
      field("ode.rel_tol", &RunConfig::ode_rel_tol),
      field("ode.seed", &RunConfig::ode_seed),
      field("phys.geometry", &RunConfig::phys_geometry),
      field("phys.dx", &RunConfig::phys_dx),
      field("phys.half_width", &RunConfig::phys_half_width),
      field("phys.cfl", &RunConfig::phys_cfl),
      field("phys.dt_nonlinear", &RunConfig::phys_dt_nonlinear),
      field("phys.scheme", &RunConfig::phys_scheme),
      field("phys.ic", &RunConfig::phys_ic),
      field("phys.stop_amp", &RunConfig::phys_stop_amp),
      field("phys.levels_per_decade", &RunConfig::phys_levels_per_decade),
      field("phys.cone_x0", &RunConfig::phys_cone_x0),
      field("phys.export_tau", &RunConfig::phys_export_tau),
      field("ss.grid_n", &RunConfig::ss_grid_n),
      field("ss.ds_factor", &RunConfig::ss_ds_factor),
      field("ss.s0", &RunConfig::ss_s0),
      field("ss.s1", &RunConfig::ss_s1),
      field("ss.ic", &RunConfig::ss_ic),
      field("ss.map_mu", &RunConfig::ss_map_mu),
      field("ss.gamma_form", &RunConfig::ss_gamma_form),
      field("ss.c_tol", &RunConfig::ss_c_tol),
      field("ss.T0", &RunConfig::ss_T0),
      field("ss.x0", &RunConfig::ss_x0),
      field("ss.shoot_band", &RunConfig::ss_shoot_band),
      field("ss.shoot_tol", &RunConfig::ss_shoot_tol),
      field("fit.source", &RunConfig::fit_source),
      field("fit.cone", &RunConfig::fit_cone),
      field("fit.window_lo", &RunConfig::fit_window_lo),
      field("fit.window_hi", &RunConfig::fit_window_hi),
      field("fit.pin_gamma", &RunConfig::fit_pin_gamma),
      field("appendix.u_max", &RunConfig::appendix_u_max),
      field("appendix.per_decade", &RunConfig::appendix_per_decade),
      field("sweep.scenario", &RunConfig::sweep_scenario),
      field("sweep.axis", &RunConfig::sweep_axis),
      field("sweep.values", &RunConfig::sweep_values),
      field("sweep.threads", &RunConfig::sweep_threads),
  };
  return all;
}

inline const Field& find_field(const std::string& key) {
  for (const auto& f : fields())
    if (f.key == key) return f;
  throw ConfigError(key + ": unknown configuration key");
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Sets one key from its text form; unknown keys and malformed values throw ConfigError.
inline void set_key(RunConfig& c, const std::string& key, const std::string& value) {
  detail::find_field(key).set(c, value);
}

inline std::string get_key(const RunConfig& c, const std::string& key) { return detail::find_field(key).get(c); }

inline bool is_numeric_key(const std::string& key) { return detail::find_field(key).numeric; }

/// Short names accepted on the command line for sweep axes: a, p, N, grid-n, dx.
inline std::string canonical_key(const std::string& key) {
  static const std::vector<std::pair<std::string, std::string>> alias = {
      {"p", "model.p"}, {"a", "model.a"}, {"N", "model.N"}, {"grid-n", "ss.grid_n"}, {"dx", "phys.dx"}};
  for (const auto& [k, v] : alias)
    if (k == key) return v;
  return key;
}

/// Applies "key=value".
inline void apply_assignment(RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set_key(c, detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
}

inline std::string to_text(const RunConfig& c) {
  std::string out;
  for (const auto& f : detail::fields()) out += f.key + "=" + f.get(c) + "\n";
  return out;
}

/// Parses key=value lines over the defaults. '#' starts a comment line.
inline RunConfig from_text(const std::string& text, RunConfig base = {}) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    try {
      apply_assignment(base, t);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

/// Range checks with the offending key in the message.
inline void validate(const RunConfig& c) {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  static const std::vector<std::string> scenarios = {"ode", "phys", "ss", "fit", "verify-appendix", "sweep"};
  need(std::find(scenarios.begin(), scenarios.end(), c.scenario) != scenarios.end(),
       "scenario: unknown scenario '" + c.scenario + "'");
  need(!c.output_dir.empty(), "output_dir: must not be empty");
  try {
    validate(c.model());
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  need(c.theta > 0.0, "model.theta: must be > 0");
  need(c.m0 > 0.0, "model.m0: must be > 0");
  need(c.quad_rel_tol > 0.0 && c.quad_rel_tol < 1e-3, "quad.rel_tol: must lie in (0, 1e-3)");
  need(c.ode_eps_init > 0.0 && c.ode_eps_init < 1.0, "ode.eps_init: must lie in (0, 1)");
  need(c.ode_t_start < c.ode_T - c.ode_eps_init, "ode.t_start: must be < ode.T - ode.eps_init");
  need(c.ode_T - c.ode_t_start < 1.0, "ode.t_start: ode.T - ode.t_start must be < 1");
  need(c.ode_rel_tol > 0.0, "ode.rel_tol: must be > 0");
  need(c.ode_seed == "zero-energy" || c.ode_seed == "asymptotic", "ode.seed: zero-energy or asymptotic");
  need(c.phys_geometry == "line" || c.phys_geometry == "radial", "phys.geometry: line or radial");
  need(c.phys_dx > 0.0, "phys.dx: must be > 0");
  need(c.phys_half_width > 0.0, "phys.half_width: must be > 0");
  need(c.phys_cfl > 0.0 && c.phys_cfl <= 1.0, "phys.cfl: must lie in (0, 1]");
  need(c.phys_dt_nonlinear > 0.0, "phys.dt_nonlinear: must be > 0");
  need(c.phys_scheme == "rk4" || c.phys_scheme == "leapfrog", "phys.scheme: rk4 or leapfrog");
  need(c.phys_stop_amp > 0.0, "phys.stop_amp: must be > 0");
  need(c.phys_levels_per_decade >= 1, "phys.levels_per_decade: must be >= 1");
  need(c.phys_export_tau > 0.0 && c.phys_export_tau < 1.0, "phys.export_tau: must lie in (0, 1)");
  need(c.ss_grid_n >= 8, "ss.grid_n: must be >= 8");
  need(c.ss_ds_factor > 0.0 && c.ss_ds_factor <= 1.0, "ss.ds_factor: must lie in (0, 1]");
  need(c.ss_s0 >= 1.0, "ss.s0: must be >= 1");
  need(c.ss_s1 > c.ss_s0, "ss.s1: must exceed ss.s0");
  need(c.ss_map_mu >= 0.0 && c.ss_map_mu < 1.0, "ss.map_mu: must lie in [0, 1)");
  need(c.ss_gamma_form == "exact" || c.ss_gamma_form == "published", "ss.gamma_form: exact or published");
  need(c.ss_c_tol > 0.0, "ss.c_tol: must be > 0");
  need(c.ss_shoot_band > 0.0, "ss.shoot_band: must be > 0");
  need(c.ss_shoot_tol > 0.0, "ss.shoot_tol: must be > 0");
  need(c.fit_window_lo > 0.0 && c.fit_window_lo < c.fit_window_hi && c.fit_window_hi < 1.0,
       "fit.window_lo, fit.window_hi: need 0 < lo < hi < 1");
  need(c.appendix_u_max >= 1e6, "appendix.u_max: must be >= 1e6");
  need(c.appendix_per_decade >= 1, "appendix.per_decade: must be >= 1");
  need(c.sweep_threads >= 0, "sweep.threads: must be >= 0");
  if (c.scenario == "sweep") {
    need(c.sweep_scenario != "sweep" &&
             std::find(scenarios.begin(), scenarios.end(), c.sweep_scenario) != scenarios.end(),
         "sweep.scenario: must name a non-sweep scenario");
    bool numeric = false;
    try {
      numeric = is_numeric_key(c.sweep_axis);
    } catch (const ConfigError&) {
    }
    need(numeric, "sweep.axis: must name a numeric key");
  }
}

}  // namespace blowup
