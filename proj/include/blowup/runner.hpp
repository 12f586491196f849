#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "blowup/analysis.hpp"
#include "blowup/appendix.hpp"
#include "blowup/config.hpp"
#include "blowup/errors.hpp"
#include "blowup/functionals.hpp"
#include "blowup/io.hpp"
#include "blowup/model.hpp"
#include "blowup/ode_profile.hpp"
#include "blowup/phys_solver.hpp"
#include "blowup/similarity.hpp"

namespace blowup {

namespace fs = std::filesystem;

enum ExitCode : int { kExitPass = 0, kExitVerdictFail = 1, kExitUsage = 2, kExitNumeric = 3 };

struct ScenarioOutcome {
  Json results = Json::object();
  bool pass = false;
  int code = -1;  // overrides the pass/fail mapping when >= 0
};

struct RunOutcome {
  int code = kExitPass;
  Json report;
  std::string error;
};

inline Json model_json(const RunConfig& c) {
  const auto d = DerivedConstants::make(c.model(), c.theta, c.m0);
  Json j;
  j["p"] = c.p;
  j["a"] = c.a;
  j["N"] = c.N;
  j["alpha"] = d.alpha;
  j["kappa_a"] = d.kappa_a;
  j["p_c"] = num(d.p_c);
  j["theta"] = d.theta;
  j["m0"] = d.m0;
  return j;
}

inline Json config_json(const RunConfig& c) {
  Json j = Json::object();
  for (const auto& f : detail::fields()) j[f.key] = f.get(c);
  return j;
}

namespace detail {

inline bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

inline Geometry geometry_of(const std::string& g) { return g == "radial" ? Geometry::Radial : Geometry::Line; }

inline std::string geometry_name(Geometry g) { return g == Geometry::Radial ? "radial" : "line"; }

inline double value_at_tau(const OdeTrajectory& tr, double tau) {
  return tr.v_at_tau(tau) / (kappa_a(tr.params) * psi_tau(tau, tr.params));
}

inline bool covers(const OdeTrajectory& tr, double tau) {
  return tr.samples.size() >= 2 && tau <= tr.samples.front().tau && tau >= tr.samples.back().tau;
}

inline OdeOptions ode_options(const RunConfig& c) {
  OdeOptions o;
  o.rel_tol = c.ode_rel_tol;
  o.quad_rel_tol = c.quad_rel_tol;
  o.seed = c.ode_seed == "asymptotic" ? OdeSeed::Asymptotic : OdeSeed::ZeroEnergy;
  return o;
}

inline OdeTrajectory solve_ode(const RunConfig& c, double eps) {
  auto tr = solve_profile(c.model(), c.ode_T, c.ode_t_start, eps, ode_options(c));
  if (!tr.complete) throw ConvergenceError("ode integration stopped early: " + tr.message, tr.samples.empty() ? 0.0 : tr.samples.front().t);
  return tr;
}

// ---------------------------------------------------------------- physical runs

struct PhysRun {
  PhysicalState initial;
  PhysOptions options;
  BlowupRecord record;
  double cone_x0 = 0.0;
  std::vector<ConeSample> cone;
};

inline PhysOptions phys_options(const RunConfig& c) {
  PhysOptions o;
  o.scheme = c.phys_scheme == "leapfrog" ? Scheme::Leapfrog : Scheme::RK4;
  o.cfl = c.phys_cfl;
  o.dt_nonlinear = c.phys_dt_nonlinear;
  o.stop_amp = c.phys_stop_amp;
  o.levels_per_decade = c.phys_levels_per_decade;
  o.quad_rel_tol = c.quad_rel_tol;
  return o;
}

inline PhysRun run_phys(const RunConfig& c) {
  PhysRun r;
  const Mesh mesh = make_mesh(geometry_of(c.phys_geometry), c.N, c.phys_half_width, c.phys_dx);
  r.initial = make_initial_state(mesh, c.phys_ic);
  r.options = phys_options(c);
  r.record = run_to_blowup(r.initial, c.model(), r.options);
  if (c.phys_cone_x0 == "auto")
    r.cone_x0 = mesh.geometry == Geometry::Radial ? 0.0 : r.record.x_star;
  else
    r.cone_x0 = parse_double("phys.cone_x0", c.phys_cone_x0);
  const double T = r.record.T_est;
  for (const auto& snap : r.record.snapshots) {
    const double tau = T - snap.t;
    if (!(tau > 0.0) || !(tau < 1.0)) continue;
    try {
      const auto n = cone_norms(snap, c.model(), r.cone_x0, T);
      r.cone.push_back({snap.t, n.n0, n.n1, n.n2});
    } catch (const ResolutionError&) {
    } catch (const DomainError&) {
    }
  }
  return r;
}

inline void write_amp_series(const fs::path& dir, const BlowupRecord& rec) {
  CsvWriter w({"t", "sup_norm", "dt"});
  for (const auto& a : rec.amp_series) w.row({a.t, a.sup_norm, a.dt});
  w.save(dir / "amp_series.csv");
}

inline void write_cone_norms(const fs::path& dir, const std::vector<ConeSample>& cone) {
  CsvWriter w({"t", "n0", "n1", "n2"});
  for (const auto& s : cone) w.row({s.t, s.n0, s.n1, s.n2});
  w.save(dir / "cone_norms.csv");
}

inline Json window_json(const std::vector<ConeSample>& cone, double T) {
  Json j;
  try {
    const auto w = light_cone_window(cone, T);
    j["sum_min"] = num(w.sum_min);
    j["sum_max"] = num(w.sum_max);
    j["ratio"] = num(w.ratio);
    j["n0_tail_min"] = num(w.n0_tail_min);
    j["n0_tail_max"] = num(w.n0_tail_max);
    j["decades"] = num(w.decades);
    j["degenerate"] = w.degenerate;
    j["pass"] = w.pass;
    j["message"] = w.message;
  } catch (const DomainError& e) {
    j["pass"] = false;
    j["message"] = std::string("not evaluated: ") + e.what();
  }
  return j;
}

inline Json rate_fit_json(const BlowupFit& f) {
  Json j;
  j["T_fit"] = num(f.T_fit);
  j["beta_fit"] = num(f.beta_fit);
  j["gamma_fit"] = num(f.gamma_fit);
  j["amp_fit"] = num(f.amp_fit);
  j["residual_rms"] = num(f.residual_rms);
  j["T_err"] = num(f.T_err);
  j["beta_err"] = num(f.beta_err);
  j["gamma_err"] = num(f.gamma_err);
  j["gamma_first_half"] = num(f.gamma_first_half);
  j["gamma_second_half"] = num(f.gamma_second_half);
  j["pinned_gamma"] = f.pinned_gamma;
  j["samples"] = f.samples;
  j["window"] = Json::array({num(f.window.first), num(f.window.second)});
  return j;
}

inline FitOptions fit_options(const RunConfig& c) {
  FitOptions o;
  o.window_lo = c.fit_window_lo;
  o.window_hi = c.fit_window_hi;
  o.pin_gamma = c.fit_pin_gamma;
  return o;
}

inline std::vector<RateSample> amp_to_rate(const std::vector<AmpSample>& amp) {
  std::vector<RateSample> out;
  for (const auto& a : amp) out.push_back({a.t, a.sup_norm});
  return out;
}

/// State at T_est - tau, re-integrated from the initial data, as "x,u,u_t" with a metadata line.
inline void write_export_state(const fs::path& dir, const RunConfig& c, const PhysRun& r, Json& out) {
  const double t_target = r.record.T_est - c.phys_export_tau;
  if (!(t_target > r.initial.t)) {
    out["export_state"] = nullptr;
    out["export_message"] = "phys.export_tau exceeds the run length";
    return;
  }
  const auto s = advance_to(r.initial, c.model(), t_target, r.options);
  std::string text = "# t=" + fmt17(s.t) + ",T_est=" + fmt17(r.record.T_est) + ",x_star=" + fmt17(r.record.x_star) +
                     ",geometry=" + geometry_name(s.mesh.geometry) + ",N=" + std::to_string(s.mesh.N) + "\n";
  CsvWriter w({"x", "u", "u_t"});
  for (std::size_t i = 0; i < s.mesh.n; ++i) w.row({s.mesh.x(i), s.u[i], s.u_t[i]});
  write_text_file(dir / "export_state.csv", text + w.text());
  out["export_state"] = "export_state.csv";
  out["export_t"] = s.t;
}

struct ExportedState {
  PhysicalState state;
  double T_est = 0.0;
  double x_star = 0.0;
};

inline ExportedState read_export_state(const fs::path& path, const RunConfig& c) {
  const auto meta = read_csv_metadata(path);
  auto need = [&](const std::string& k) {
    const auto it = meta.find(k);
    if (it == meta.end()) throw ConfigError(path.string() + ": missing metadata '" + k + "'");
    return it->second;
  };
  ExportedState e;
  e.state.t = parse_double("t", need("t"));
  e.T_est = parse_double("T_est", need("T_est"));
  e.x_star = parse_double("x_star", need("x_star"));
  const std::string geom = need("geometry");
  const int N = static_cast<int>(parse_int("N", need("N")));
  if (N != c.N) throw ConfigError("model.N: differs from the exported state (N=" + std::to_string(N) + ")");
  const auto table = read_csv(path);
  const auto xs = table.values("x");
  if (xs.size() < 5) throw ConfigError(path.string() + ": fewer than 5 nodes");
  Mesh mesh;
  mesh.geometry = geometry_of(geom);
  mesh.N = N;
  mesh.origin = xs.front();
  mesh.n = xs.size();
  mesh.dx = (xs.back() - xs.front()) / static_cast<double>(xs.size() - 1);
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (std::fabs(xs[i] - mesh.x(i)) > 1e-9 * std::max(1.0, std::fabs(xs[i])))
      throw ConfigError(path.string() + ": nodes are not uniformly spaced");
  e.state.mesh = mesh;
  e.state.u = table.values("u");
  e.state.u_t = table.values("u_t");
  return e;
}

// ---------------------------------------------------------------- scenarios

inline ScenarioOutcome scenario_ode(const RunConfig& c, const fs::path& dir) {
  const ModelParams m = c.model();
  const auto tr = solve_ode(c, c.ode_eps_init);
  const double k = kappa_a(m);
  CsvWriter w({"t", "v", "v_dot", "psi", "ratio"});
  double max_dev = 0.0;
  for (const auto& s : tr.samples) {
    const double psi = psi_tau(s.tau, m);
    const double ratio = s.v / (k * psi);
    w.row({s.t, s.v, s.v_dot, psi, ratio});
    if (s.tau >= 1e-6 && s.tau <= 0.5) max_dev = std::max(max_dev, std::fabs(ratio - 1.0));
  }
  w.save(dir / "ode.csv");

  ScenarioOutcome out;
  Json& r = out.results;
  r["samples"] = tr.samples.size();
  r["ratio_max_deviation"] = max_dev;
  // for a = 0 the profile kappa psi is the exact solution
  r["max_rel_err"] = m.a == 0.0 ? num(max_dev) : Json(nullptr);
  const bool both = covers(tr, 1e-2) && covers(tr, 1e-6);
  const double r2 = covers(tr, 1e-2) ? value_at_tau(tr, 1e-2) : std::nan("");
  const double r6 = covers(tr, 1e-6) ? value_at_tau(tr, 1e-6) : std::nan("");
  r["ratio_tau_1e-2"] = num(r2);
  r["ratio_tau_1e-6"] = num(r6);
  double consistency = std::nan("");
  if (covers(tr, 1e-6)) {
    const auto deeper = solve_ode(c, c.ode_eps_init / 10.0);
    consistency = std::fabs(value_at_tau(deeper, 1e-6) - r6);
  }
  r["seed_consistency"] = num(consistency);
  const bool ordering = both && std::fabs(r6 - 1.0) < std::fabs(r2 - 1.0);
  r["ordering"] = both ? Json(ordering) : Json(nullptr);
  if (m.a == 0.0) {
    out.pass = max_dev < 1e-8;
  } else {
    out.pass = ordering && consistency < 1e-6;
    if (!both) r["message"] = "trajectory does not cover T - t in [1e-6, 1e-2]";
  }
  return out;
}

inline ScenarioOutcome scenario_phys(const RunConfig& c, const fs::path& dir) {
  const auto run = run_phys(c);
  const auto& rec = run.record;
  write_amp_series(dir, rec);
  write_cone_norms(dir, run.cone);
  ScenarioOutcome out;
  Json& r = out.results;
  r["T_est"] = rec.T_est;
  r["T_fit_rms"] = rec.T_fit_rms;
  r["x_star"] = rec.x_star;
  r["final_sup_norm"] = rec.amp_series.back().sup_norm;
  r["final_t"] = rec.final_state.t;
  r["steps"] = rec.steps;
  r["dt_last"] = rec.dt_last;
  r["stopped_by_nonfinite"] = rec.stopped_by_nonfinite;
  r["lipschitz_slope"] = rec.lipschitz_slope;
  r["slope_near_one"] = rec.slope_near_one;
  const Mesh& mesh = rec.final_state.mesh;
  r["mesh"] = {{"geometry", geometry_name(mesh.geometry)}, {"N", mesh.N},     {"dx", mesh.dx},
               {"n", mesh.n},                               {"left", mesh.left()}, {"right", mesh.right()}};
  r["cone_x0"] = run.cone_x0;
  r["cone_samples"] = run.cone.size();
  r["window"] = window_json(run.cone, rec.T_est);
  r["window_ratio"] = r["window"].contains("ratio") ? r["window"]["ratio"] : Json(nullptr);
  try {
    r["rate_fit"] = rate_fit_json(fit_rate(amp_to_rate(rec.amp_series), c.model(), fit_options(c)));
  } catch (const DomainError& e) {
    r["rate_fit"] = {{"message", std::string("not evaluated: ") + e.what()}};
  }
  write_export_state(dir, c, run, r);
  out.pass = true;
  return out;
}

inline ScenarioOutcome scenario_ss(const RunConfig& c, const fs::path& dir) {
  const ModelParams m = c.model();
  const auto consts = DerivedConstants::make(m, c.theta, c.m0);
  const Geometry geom = m.N == 1 ? Geometry::Line : Geometry::Radial;
  auto grid = std::make_shared<SimilarityGrid>(make_similarity_grid(geom, m, static_cast<std::size_t>(c.ss_grid_n), c.ss_map_mu));
  grid->gamma_form = c.ss_gamma_form == "published" ? GammaForm::Published : GammaForm::Exact;
  std::shared_ptr<const SimilarityGrid> g = grid;
  const double ds_max = max_similarity_ds(*g, c.ss_ds_factor);

  ScenarioOutcome out;
  Json& r = out.results;
  SimilarityState st;
  const std::string& ic = c.ss_ic;
  if (ic == "kappa") {
    st = perturbed_kappa_state(g, c.ss_s0, 0.0);
  } else if (starts_with(ic, "constant:")) {
    st = perturbed_kappa_state(g, c.ss_s0, 0.0, parse_double("ss.ic", ic.substr(9)) - kappa_a(m));
  } else if (starts_with(ic, "perturbed-kappa:")) {
    const double eps = parse_double("ss.ic", ic.substr(16));
    const auto shot = shoot_perturbed_kappa(g, c.ss_s0, c.ss_s1, eps, ds_max, c.ss_shoot_band, c.ss_shoot_tol, 100,
                                            c.quad_rel_tol);
    r["shooting"] = {{"eps", eps},
                     {"shift", shot.shift},
                     {"iterations", shot.iterations},
                     {"s_reached", shot.s_reached},
                     {"final_deviation", shot.final_deviation},
                     {"bounded", shot.bounded}};
    st = perturbed_kappa_state(g, c.ss_s0, eps, shot.shift);
  } else if (starts_with(ic, "from-phys:")) {
    const auto e = read_export_state(ic.substr(10), c);
    const double T0 = c.ss_T0 == "auto" ? e.T_est : parse_double("ss.T0", c.ss_T0);
    const double x0 = c.ss_x0 == "auto" ? (geom == Geometry::Radial ? 0.0 : e.x_star) : parse_double("ss.x0", c.ss_x0);
    st = to_similarity(e.state, m, x0, T0, g);
    if (!(st.s >= 1.0)) throw DomainError("exported state maps to s < 1; lower phys.export_tau");
    r["transform"] = {{"T0", T0}, {"x0", x0}, {"s", st.s}};
    // checkpoints at integer s
    const double s_int = std::ceil(st.s - 1e-12);
    if (!(c.ss_s1 > s_int)) throw ConfigError("ss.s1: must exceed the first integer s after the transform");
    try {
      st = evolve_selfsimilar(st, s_int, ds_max, {}, c.quad_rel_tol);
    } catch (const SelfSimilarBlowup& b) {
      r["blew_up"] = true;
      r["message"] = b.what();
      out.pass = false;
      return out;
    }
  } else {
    throw ConfigError("ss.ic: kappa, constant:c, perturbed-kappa:eps or from-phys:path expected");
  }

  std::vector<double> w0;
  double drift = 0.0, w0_max = 0.0;
  std::vector<std::string> state_files;
  SimilarityRunOptions o;
  o.s_end = c.ss_s1;
  o.ds_factor = c.ss_ds_factor;
  o.quad_rel_tol = c.quad_rel_tol;
  o.at_checkpoint = [&](const SimilarityState& x) {
    if (w0.empty()) {
      w0 = x.w;
      for (double v : w0) w0_max = std::max(w0_max, std::fabs(v));
    } else {
      double d = 0.0;
      for (std::size_t i = 0; i < x.w.size(); ++i) d = std::max(d, std::fabs(x.w[i] - w0[i]));
      drift = std::max(drift, d / std::max(w0_max, 1e-300));
    }
    const double si = std::round(x.s);
    if (std::fabs(x.s - si) > 1e-9) return;
    CsvWriter w({"y", "w", "w_s"});
    for (std::size_t i = 0; i < x.grid->n; ++i) w.row({x.grid->y[i], x.w[i], x.w_s[i]});
    const std::string name = "state_s" + std::to_string(static_cast<long long>(si)) + ".csv";
    w.save(dir / name);
    state_files.push_back(name);
  };
  const auto run = run_similarity(st, consts, o);

  CsvWriter fw({"s", "E", "J", "L0", "L", "H_m0", "D", "h1_norm", "l2_norm", "lp1_log_norm"});
  for (const auto& sn : run.snapshots)
    fw.row({sn.s, sn.E, sn.J, sn.L0, sn.L, sn.H_m0, sn.D, sn.h1_norm, sn.l2_norm, sn.lp1_log_norm});
  fw.save(dir / "functionals.csv");

  const auto v = lyapunov_verdict(run, consts, g->h, c.ss_c_tol);
  Json vj;
  vj["intervals"] = Json::array();
  for (const auto& iv : v.intervals) vj["intervals"].push_back({{"s", iv.s}, {"defect", iv.defect}, {"tol", iv.tol}, {"pass", iv.pass}});
  const bool pass = v.overall_pass && !run.blew_up;
  vj["overall_pass"] = pass;
  vj["theta"] = v.theta;
  vj["m0"] = v.m0;
  vj["model"] = model_json(c);
  write_text_file(dir / "verdict.json", json_text(vj));

  r["grid_n"] = g->n;
  r["h"] = g->h;
  r["ds"] = run.ds;
  r["steps"] = run.steps;
  r["s_start"] = run.snapshots.front().s;
  r["s_end"] = run.final_state.s;
  r["blew_up"] = run.blew_up;
  if (run.blew_up) r["message"] = run.message;
  r["max_defect"] = num(v.max_defect);
  r["identity_residual"] = v.identity_residual;
  r["first_pass_from"] = num(v.first_pass_from);
  r["stationarity_drift"] = drift;
  r["energy_drift"] = std::fabs(run.snapshots.back().E - run.snapshots.front().E);
  r["overall_pass"] = pass;
  r["state_files"] = state_files;
  if (!run.blew_up && run.snapshots.size() >= 10 && run.snapshots.back().s >= 4.0 * run.snapshots.front().s) {
    const auto h1 = h1_growth_monitor(run.snapshots);
    r["h1_growth"] = {{"slope", h1.slope},
                      {"slope_first_half", h1.slope_first_half},
                      {"slope_second_half", h1.slope_second_half},
                      {"degenerate", h1.degenerate}};
  }
  out.pass = pass;
  return out;
}

inline ScenarioOutcome scenario_fit(const RunConfig& c, const fs::path& dir) {
  const ModelParams m = c.model();
  ScenarioOutcome out;
  Json& r = out.results;
  std::vector<RateSample> series;
  std::vector<ConeSample> cone;
  const std::string& src = c.fit_source;
  if (src == "ode") {
    // log-spaced resampling, 20 per decade, of the trajectory with T = ode.T
    const auto tr = solve_ode(c, c.ode_eps_init);
    const double tau_hi = std::min(c.ode_T - c.ode_t_start, 0.5);
    const double tau_lo = 10.0 * c.ode_eps_init;
    const int n = static_cast<int>(std::floor(20.0 * std::log10(tau_hi / tau_lo)));
    for (int j = 0; j <= n; ++j) {
      const double tau = tau_hi * std::pow(10.0, -j / 20.0);
      series.push_back({c.ode_T - tau, tr.v_at_tau(tau)});
    }
    r["source"] = "ode";
  } else if (src == "phys") {
    const auto run = run_phys(c);
    write_amp_series(dir, run.record);
    write_cone_norms(dir, run.cone);
    series = amp_to_rate(run.record.amp_series);
    cone = run.cone;
    r["source"] = "phys";
    r["T_est"] = run.record.T_est;
  } else if (starts_with(src, "file:")) {
    const auto t = read_csv(src.substr(5));
    const auto ts = t.values("t");
    bool has_sup = std::find(t.header.begin(), t.header.end(), "sup_norm") != t.header.end();
    const auto amps = t.values(has_sup ? "sup_norm" : "v");
    for (std::size_t i = 0; i < ts.size(); ++i) series.push_back({ts[i], amps[i]});
    r["source"] = src;
  } else {
    throw ConfigError("fit.source: ode, phys or file:path expected");
  }
  if (!c.fit_cone.empty()) {
    const auto t = read_csv(c.fit_cone);
    const auto ts = t.values("t"), a = t.values("n0"), b = t.values("n1"), d = t.values("n2");
    cone.clear();
    for (std::size_t i = 0; i < ts.size(); ++i) cone.push_back({ts[i], a[i], b[i], d[i]});
  }
  const auto fit = fit_rate(series, m, fit_options(c));
  r["series_samples"] = series.size();
  const Json fj_all = rate_fit_json(fit);
  for (auto it = fj_all.begin(); it != fj_all.end(); ++it) r[it.key()] = it.value();
  if (!cone.empty()) {
    r["window_report"] = window_json(cone, fit.T_fit);
    r["window_ratio"] = r["window_report"].contains("ratio") ? r["window_report"]["ratio"] : Json(nullptr);
  }

  Json fj;
  fj["T_fit"] = num(fit.T_fit);
  fj["beta_fit"] = num(fit.beta_fit);
  fj["gamma_fit"] = num(fit.gamma_fit);
  fj["amp_fit"] = num(fit.amp_fit);
  fj["residual_rms"] = num(fit.residual_rms);
  fj["window"] = Json::array({num(fit.window.first), num(fit.window.second)});
  fj["pinned_gamma"] = fit.pinned_gamma;
  fj["model"] = model_json(c);
  write_text_file(dir / "fit.json", json_text(fj));
  out.pass = true;
  return out;
}

inline ScenarioOutcome scenario_appendix(const RunConfig& c, const fs::path& dir) {
  const ModelParams m = c.model();
  AsymptoticsOptions ao;
  ao.rel_tol = c.quad_rel_tol;
  const auto grid = default_appendix_grid(1.0, c.appendix_u_max, c.appendix_per_decade);
  const auto a = check_appendix_asymptotics(m, grid, ao);
  CsvWriter w({"u", "r1", "r2"});
  for (std::size_t i = 0; i < a.u.size(); ++i) w.row({a.u[i], a.r1[i], a.r2[i]});
  w.save(dir / "appendix.csv");
  InequalityOptions io;
  io.rel_tol = c.quad_rel_tol;
  const auto ineq = check_appendix_inequalities(m, io);

  ScenarioOutcome out;
  Json& r = out.results;
  r["r1_last"] = a.r1_last;
  r["r1_tail_monotone"] = a.r1_tail_monotone;
  r["r1_within_tol"] = a.r1_within_tol;
  r["r2_last"] = a.r2_last;
  r["r2_two_decades_back"] = a.r2_two_decades_back;
  r["r2_converged"] = a.r2_converged;
  r["asymptotics_pass"] = a.pass;
  bool all = a.pass;
  r["inequalities"] = Json::array();
  for (const auto& q : ineq) {
    r["inequalities"].push_back({{"name", q.name},
                                 {"eps", q.eps},
                                 {"coarse", num(q.coarse)},
                                 {"fine", num(q.fine)},
                                 {"finite", q.finite},
                                 {"stable", q.stable}});
    all = all && q.finite && q.stable;
  }
  out.pass = all;
  return out;
}

inline ScenarioOutcome scenario_sweep(const RunConfig& c, const fs::path& dir);

inline ScenarioOutcome dispatch(const RunConfig& c, const fs::path& dir) {
  if (c.scenario == "ode") return scenario_ode(c, dir);
  if (c.scenario == "phys") return scenario_phys(c, dir);
  if (c.scenario == "ss") return scenario_ss(c, dir);
  if (c.scenario == "fit") return scenario_fit(c, dir);
  if (c.scenario == "verify-appendix") return scenario_appendix(c, dir);
  return scenario_sweep(c, dir);
}

}  // namespace detail

/// Validates, runs and writes report.json. Never throws; the exit code carries the outcome.
inline RunOutcome execute(const RunConfig& c) {
  RunOutcome o;
  try {
    validate(c);
  } catch (const ConfigError& e) {
    o.code = kExitUsage;
    o.error = e.what();
    return o;
  }
  const fs::path dir = c.output_dir;
  try {
    fs::create_directories(dir);
  } catch (const fs::filesystem_error& e) {
    o.code = kExitUsage;
    o.error = std::string("output_dir: ") + e.what();
    return o;
  }
  o.report["scenario"] = c.scenario;
  o.report["config"] = config_json(c);
  o.report["model"] = model_json(c);
  try {
    auto s = detail::dispatch(c, dir);
    o.report["results"] = std::move(s.results);
    o.report["pass"] = s.pass;
    o.code = s.code >= 0 ? s.code : (s.pass ? kExitPass : kExitVerdictFail);
  } catch (const ConfigError& e) {
    o.code = kExitUsage;
    o.error = e.what();
    return o;
  } catch (const std::exception& e) {
    // DomainError, RangeError, ConvergenceError, NoBlowupError, ResolutionError and anything else numeric
    o.code = kExitNumeric;
    o.error = e.what();
    o.report["results"] = nullptr;
    o.report["pass"] = false;
    o.report["error"] = e.what();
  }
  try {
    write_text_file(dir / "report.json", json_text(o.report));
  } catch (const ConfigError& e) {
    o.code = kExitUsage;
    o.error = e.what();
  }
  return o;
}

namespace detail {

inline std::vector<std::string> sweep_columns(const std::string& scenario) {
  if (scenario == "ode") return {"max_rel_err", "ratio_tau_1e-2", "ratio_tau_1e-6", "seed_consistency"};
  if (scenario == "phys") return {"T_est", "T_fit_rms", "lipschitz_slope", "window_ratio"};
  if (scenario == "ss") return {"max_defect", "identity_residual", "stationarity_drift", "first_pass_from"};
  if (scenario == "fit") return {"T_fit", "beta_fit", "gamma_fit", "amp_fit", "residual_rms"};
  return {"r1_last", "r2_last"};
}

inline std::string cell(const Json& j) {
  if (j.is_number_float()) return fmt17(j.get<double>());
  if (j.is_number() || j.is_boolean()) return j.dump();
  if (j.is_string()) return j.get<std::string>();
  return "";
}

inline std::vector<double> parse_values(const std::string& text) {
  std::vector<double> v;
  for (const auto& item : split_csv_line(text))
    if (!item.empty()) v.push_back(parse_double("sweep.values", item));
  return v;
}

inline ScenarioOutcome scenario_sweep(const RunConfig& c, const fs::path& dir) {
  const auto values = parse_values(c.sweep_values);
  std::vector<RunConfig> children;
  for (std::size_t i = 0; i < values.size(); ++i) {
    RunConfig k = c;
    k.scenario = c.sweep_scenario;
    set_key(k, c.sweep_axis, fmt17(values[i]));
    k.output_dir = (dir / ("sweep_" + std::to_string(i))).string();
    children.push_back(std::move(k));
  }

  std::vector<RunOutcome> results(children.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < children.size(); i = next++) results[i] = execute(children[i]);
  };
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t nthreads =
      std::min<std::size_t>(children.size(), c.sweep_threads > 0 ? static_cast<std::size_t>(c.sweep_threads) : hw);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  const auto cols = sweep_columns(c.sweep_scenario);
  std::vector<std::string> header = {c.sweep_axis, "status"};
  header.insert(header.end(), cols.begin(), cols.end());
  header.push_back("pass");
  CsvWriter w(header);
  ScenarioOutcome out;
  Json failures = Json::array();
  bool any_error = false, any_fail = false;
  for (std::size_t i = 0; i < children.size(); ++i) {
    const auto& ro = results[i];
    if (ro.code == kExitUsage || ro.code == kExitNumeric) {
      any_error = true;
      failures.push_back({{"index", i}, {"value", values[i]}, {"code", ro.code}, {"error", ro.error}});
      continue;
    }
    any_fail = any_fail || ro.code == kExitVerdictFail;
    std::vector<std::string> row = {fmt17(values[i]), ro.code == kExitPass ? "pass" : "fail"};
    const Json& res = ro.report["results"];
    for (const auto& col : cols) row.push_back(res.contains(col) ? cell(res[col]) : "");
    row.push_back(ro.code == kExitPass ? "true" : "false");
    w.raw_row(row);
  }
  w.save(dir / "sweep.csv");
  out.results["axis"] = c.sweep_axis;
  out.results["scenario"] = c.sweep_scenario;
  out.results["runs"] = children.size();
  out.results["completed"] = children.size() - failures.size();
  out.results["failures"] = failures;
  out.pass = !any_error && !any_fail;
  out.code = any_error ? kExitNumeric : (any_fail ? kExitVerdictFail : kExitPass);
  return out;
}

}  // namespace detail

}  // namespace blowup
