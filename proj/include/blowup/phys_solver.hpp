#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "blowup/errors.hpp"
#include "blowup/model.hpp"

namespace blowup {

enum class Geometry { Line, Radial };
enum class Scheme { RK4, Leapfrog };

/// Uniform vertex-centred mesh. Line: x_i = origin + i dx. Radial: r_i = i dx.
struct Mesh {
  Geometry geometry = Geometry::Line;
  int N = 1;
  double origin = 0.0;
  double dx = 0.01;
  std::size_t n = 0;

  double x(std::size_t i) const { return origin + dx * static_cast<double>(i); }
  double left() const { return origin; }
  double right() const { return x(n - 1); }
};

inline Mesh make_mesh(Geometry g, int N, double half_width, double dx) {
  if (!(dx > 0.0) || !(half_width > 0.0)) throw ConfigError("phys.dx and phys.half_width must be > 0");
  if (g == Geometry::Line && N != 1) throw ConfigError("line geometry needs model.N = 1");
  Mesh m;
  m.geometry = g;
  m.N = N;
  m.dx = dx;
  const double cells = half_width / dx;
  if (g == Geometry::Line) {
    m.n = static_cast<std::size_t>(std::lround(2.0 * cells)) + 1;
    m.origin = -dx * std::lround(cells);
  } else {
    m.n = static_cast<std::size_t>(std::lround(cells)) + 1;
    m.origin = 0.0;
  }
  if (m.n < 5) throw ConfigError("mesh needs at least 5 nodes");
  return m;
}

struct PhysicalState {
  Mesh mesh;
  std::vector<double> u;
  std::vector<double> u_t;
  double t = 0.0;
};

/// Raised when a step produces non-finite values; carries the last finite state.
class NonFiniteState : public std::runtime_error {
 public:
  NonFiniteState(PhysicalState last) : std::runtime_error("non-finite state: blow-up inside a step"), last_(std::move(last)) {}
  const PhysicalState& last() const { return last_; }

 private:
  PhysicalState last_;
};

/// Area of the unit sphere S^{N-1}; 2 for N = 1.
inline double sphere_area(int N) {
  return 2.0 * std::pow(std::numbers::pi, 0.5 * N) / std::tgamma(0.5 * N);
}

/// Second-order Laplacian. Mirror (Neumann) ends; radial origin uses N u_rr.
inline void laplacian(const Mesh& m, const std::vector<double>& u, std::vector<double>& out) {
  const std::size_t n = m.n;
  const double h2 = 1.0 / (m.dx * m.dx);
  out.resize(n);
  for (std::size_t i = 1; i + 1 < n; ++i) out[i] = (u[i + 1] - 2.0 * u[i] + u[i - 1]) * h2;
  out[n - 1] = 2.0 * (u[n - 2] - u[n - 1]) * h2;
  if (m.geometry == Geometry::Line) {
    out[0] = 2.0 * (u[1] - u[0]) * h2;
    return;
  }
  out[0] = m.N * 2.0 * (u[1] - u[0]) * h2;
  const double c = (m.N - 1) / (2.0 * m.dx);
  for (std::size_t i = 1; i + 1 < n; ++i) out[i] += c / m.x(i) * (u[i + 1] - u[i - 1]);
}

/// Centred gradient; one-sided (zero at the radial origin and the mirror ends).
inline std::vector<double> gradient(const Mesh& m, const std::vector<double>& u) {
  std::vector<double> g(m.n, 0.0);
  for (std::size_t i = 1; i + 1 < m.n; ++i) g[i] = (u[i + 1] - u[i - 1]) / (2.0 * m.dx);
  return g;
}

namespace detail {

inline void wave_rhs(const Mesh& mesh, const Nonlinearity& nl, const std::vector<double>& u, const std::vector<double>& v,
                     std::vector<double>& du, std::vector<double>& dv) {
  laplacian(mesh, u, dv);
  du = v;
  for (std::size_t i = 0; i < u.size(); ++i) dv[i] += nl.f(u[i]);
}

inline bool all_finite(const std::vector<double>& a) {
  for (double x : a)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace detail

/// One explicit step of u_tt = Delta u + f(u).
inline PhysicalState step_wave(const PhysicalState& s, const ModelParams& m, double dt, Scheme scheme = Scheme::RK4,
                               double quad_rel_tol = 1e-10) {
  if (!(dt > 0.0) || dt > s.mesh.dx) throw ConfigError("step_wave needs 0 < dt <= dx");
  const auto& nl = nonlinearity(m, quad_rel_tol);
  const Mesh& mesh = s.mesh;
  PhysicalState out = s;
  try {
    if (scheme == Scheme::Leapfrog) {
      std::vector<double> lap;
      laplacian(mesh, out.u, lap);
      for (std::size_t i = 0; i < mesh.n; ++i) out.u_t[i] += 0.5 * dt * (lap[i] + nl.f(out.u[i]));
      for (std::size_t i = 0; i < mesh.n; ++i) out.u[i] += dt * out.u_t[i];
      laplacian(mesh, out.u, lap);
      for (std::size_t i = 0; i < mesh.n; ++i) out.u_t[i] += 0.5 * dt * (lap[i] + nl.f(out.u[i]));
    } else {
      const std::size_t n = mesh.n;
      std::vector<double> k1u, k1v, k2u, k2v, k3u, k3v, k4u, k4v, tu(n), tv(n);
      detail::wave_rhs(mesh, nl, s.u, s.u_t, k1u, k1v);
      for (std::size_t i = 0; i < n; ++i) tu[i] = s.u[i] + 0.5 * dt * k1u[i], tv[i] = s.u_t[i] + 0.5 * dt * k1v[i];
      detail::wave_rhs(mesh, nl, tu, tv, k2u, k2v);
      for (std::size_t i = 0; i < n; ++i) tu[i] = s.u[i] + 0.5 * dt * k2u[i], tv[i] = s.u_t[i] + 0.5 * dt * k2v[i];
      detail::wave_rhs(mesh, nl, tu, tv, k3u, k3v);
      for (std::size_t i = 0; i < n; ++i) tu[i] = s.u[i] + dt * k3u[i], tv[i] = s.u_t[i] + dt * k3v[i];
      detail::wave_rhs(mesh, nl, tu, tv, k4u, k4v);
      for (std::size_t i = 0; i < n; ++i) {
        out.u[i] = s.u[i] + dt / 6.0 * (k1u[i] + 2.0 * k2u[i] + 2.0 * k3u[i] + k4u[i]);
        out.u_t[i] = s.u_t[i] + dt / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
      }
    }
  } catch (const RangeError&) {
    throw NonFiniteState(s);
  }
  if (!detail::all_finite(out.u) || !detail::all_finite(out.u_t)) throw NonFiniteState(s);
  out.t = s.t + dt;
  return out;
}

inline double sup_norm(const std::vector<double>& u) {
  double m = 0.0;
  for (double x : u) m = std::max(m, std::fabs(x));
  return m;
}

/// Discrete energy sum w_i (u_t^2/2 - F(u)) + forward-difference gradient energy, line geometry.
inline double discrete_energy(const PhysicalState& s, const ModelParams& m) {
  const auto& nl = nonlinearity(m);
  const Mesh& mesh = s.mesh;
  double e = 0.0;
  for (std::size_t i = 0; i < mesh.n; ++i) {
    const double w = (i == 0 || i + 1 == mesh.n) ? 0.5 * mesh.dx : mesh.dx;
    e += w * (0.5 * s.u_t[i] * s.u_t[i] - nl.F(s.u[i]));
  }
  for (std::size_t i = 0; i + 1 < mesh.n; ++i) {
    const double g = (s.u[i + 1] - s.u[i]) / mesh.dx;
    e += 0.5 * mesh.dx * g * g;
  }
  return e;
}

struct PhysOptions {
  Scheme scheme = Scheme::RK4;
  double cfl = 0.5;
  double dt_nonlinear = 0.003;  // dt <= c / sqrt(max |f'(u)|)
  double stop_amp = 1e6;
  std::size_t max_steps = 5000000;
  int levels_per_decade = 20;
  bool keep_snapshots = true;
  double quad_rel_tol = 1e-10;
};

inline double choose_dt(const PhysicalState& s, const ModelParams& m, const PhysOptions& o) {
  const double amp = sup_norm(s.u);
  double dt = o.cfl * s.mesh.dx;
  const double df = eval_df(amp, m);
  if (df > 0.0) dt = std::min(dt, o.dt_nonlinear / std::sqrt(df));
  return dt;
}

/// Steps with the adaptive dt and lands exactly on t_target.
inline PhysicalState advance_to(PhysicalState s, const ModelParams& m, double t_target, const PhysOptions& o = {}) {
  if (t_target < s.t) throw DomainError("advance_to target lies in the past");
  std::size_t steps = 0;
  while (s.t < t_target) {
    double dt = choose_dt(s, m, o);
    if (s.t + dt >= t_target || t_target - (s.t + dt) < 1e-12 * dt) dt = t_target - s.t;
    if (!(dt > 0.0)) break;
    s = step_wave(s, m, dt, o.scheme, o.quad_rel_tol);
    if (++steps > o.max_steps) throw NoBlowupError("advance_to exceeded max_steps");
  }
  s.t = t_target;
  return s;
}

struct AmpSample {
  double t = 0.0;
  double sup_norm = 0.0;
  double dt = 0.0;
};

struct BlowupRecord {
  double T_est = 0.0;
  double T_fit_rms = 0.0;
  double x_star = 0.0;
  std::vector<AmpSample> amp_series;
  std::vector<PhysicalState> snapshots;  // one per amplitude level
  PhysicalState final_state;
  double dx = 0.0;
  double dt_last = 0.0;
  std::size_t steps = 0;
  bool stopped_by_nonfinite = false;
  double lipschitz_slope = 0.0;
  bool slope_near_one = false;
};

/// T minimizing sum (log A_i - log(kappa psi_T(t_i)))^2 over the final decade of amplitudes.
inline std::pair<double, double> fit_blowup_time(const std::vector<AmpSample>& series, const ModelParams& m) {
  if (series.size() < 3) throw DomainError("amplitude series too short for a T fit");
  const double top = series.back().sup_norm;
  std::vector<AmpSample> tail;
  for (const auto& a : series)
    if (a.sup_norm >= top / 10.0) tail.push_back(a);
  if (tail.size() < 3) tail.assign(series.end() - 3, series.end());
  const double k = kappa_a(m);
  const double t_last = tail.back().t;
  const double span = std::max(t_last - tail.front().t, 1e-300);
  auto cost = [&](double T) {
    double c = 0.0;
    for (const auto& a : tail) {
      const double tau = T - a.t;
      if (!(tau < 1.0)) return 1e300;
      const double r = std::log(a.sup_norm) - std::log(k * psi_tau(tau, m));
      c += r * r;
    }
    return c;
  };
  // tau at the last sample is between 1e-6 span and 10 span for any sane run
  const auto best = boost::math::tools::brent_find_minima(
      [&](double lg) { return cost(t_last + std::exp(lg)); }, std::log(1e-6 * span), std::log(10.0 * span), 60);
  const double T = t_last + std::exp(best.first);
  return {T, std::sqrt(best.second / tail.size())};
}

/// Empirical Lipschitz slope of x -> T(x) near x_star, with T(x) = t + tau(x) and
/// kappa psi(tau(x)) = |u(x, t)| on the final state (nodes with |u| >= 0.1 sup).
inline double blowup_curve_slope(const PhysicalState& s, const ModelParams& m, double T_star, double x_star) {
  const double amp = sup_norm(s.u);
  const double k = kappa_a(m);
  double slope = 0.0;
  for (std::size_t i = 0; i < s.mesh.n; ++i) {
    const double ui = std::fabs(s.u[i]);
    const double dxs = std::fabs(s.mesh.x(i) - x_star);
    if (ui < 0.1 * amp || dxs == 0.0) continue;
    // invert kappa psi(tau) = ui by bisection in log tau
    double lo = std::log(1e-300), hi = std::log(1.0 - 1e-12);
    if (k * psi_tau(std::exp(hi), m) >= ui) continue;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (k * psi_tau(std::exp(mid), m) > ui) lo = mid;
      else hi = mid;
    }
    const double Tx = s.t + std::exp(0.5 * (lo + hi));
    slope = std::max(slope, std::fabs(Tx - T_star) / dxs);
  }
  return slope;
}

inline BlowupRecord run_to_blowup(const PhysicalState& s0, const ModelParams& m, const PhysOptions& o = {}) {
  validate(m);
  if (o.levels_per_decade < 1) throw ConfigError("phys.levels_per_decade must be >= 1");
  PhysicalState s = s0;
  double sup = sup_norm(s.u);
  if (!(o.stop_amp > sup)) throw ConfigError("phys.stop_amp must exceed the initial sup-norm");
  BlowupRecord rec;
  rec.dx = s.mesh.dx;
  const double ratio = std::pow(10.0, 1.0 / o.levels_per_decade);
  double next_level = std::max(sup, 1e-300) * ratio;
  rec.amp_series.push_back({s.t, sup, 0.0});
  if (o.keep_snapshots) rec.snapshots.push_back(s);
  double dt = 0.0;
  while (true) {
    if (rec.steps >= o.max_steps) throw NoBlowupError("no blow-up detected within phys.max_steps");
    dt = choose_dt(s, m, o);
    try {
      s = step_wave(s, m, dt, o.scheme, o.quad_rel_tol);
    } catch (const NonFiniteState& e) {
      s = e.last();
      rec.stopped_by_nonfinite = true;
      break;
    }
    ++rec.steps;
    sup = sup_norm(s.u);
    if (sup >= o.stop_amp) break;
    if (sup >= next_level) {
      rec.amp_series.push_back({s.t, sup, dt});
      if (o.keep_snapshots) rec.snapshots.push_back(s);
      while (next_level <= sup) next_level *= ratio;
    }
  }
  if (rec.amp_series.back().t != s.t) {
    rec.amp_series.push_back({s.t, sup_norm(s.u), dt});
    if (o.keep_snapshots) rec.snapshots.push_back(s);
  }
  rec.dt_last = dt;
  // ties (flat data) resolve to the node nearest the centre of the domain
  const double top = sup_norm(s.u);
  const double centre = s.mesh.geometry == Geometry::Line ? 0.5 * (s.mesh.left() + s.mesh.right()) : 0.0;
  std::size_t imax = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < s.mesh.n; ++i) {
    if (std::fabs(s.u[i]) < top * (1.0 - 1e-12)) continue;
    const double d = std::fabs(s.mesh.x(i) - centre);
    if (d < best) {
      best = d;
      imax = i;
    }
  }
  rec.x_star = s.mesh.x(imax);
  const auto [T, rms] = fit_blowup_time(rec.amp_series, m);
  rec.T_est = T;
  rec.T_fit_rms = rms;
  rec.lipschitz_slope = blowup_curve_slope(s, m, T, rec.x_star);
  rec.slope_near_one = rec.lipschitz_slope > 0.9;
  rec.final_state = std::move(s);
  return rec;
}

/// Exact integral over [a, b] of the piecewise-linear interpolant of nodal g.
inline double pl_integral(const Mesh& mesh, const std::vector<double>& g, double a, double b) {
  if (b <= a) return 0.0;
  auto value_at = [&](double x) {
    double pos = (x - mesh.origin) / mesh.dx;
    std::size_t i = static_cast<std::size_t>(std::clamp(std::floor(pos), 0.0, static_cast<double>(mesh.n - 2)));
    const double th = pos - static_cast<double>(i);
    return (1.0 - th) * g[i] + th * g[i + 1];
  };
  const double pa = (a - mesh.origin) / mesh.dx, pb = (b - mesh.origin) / mesh.dx;
  const std::size_t ia = static_cast<std::size_t>(std::ceil(pa)), ib = static_cast<std::size_t>(std::floor(pb));
  if (ia > ib) return 0.5 * (value_at(a) + value_at(b)) * (b - a);
  double sum = 0.5 * (value_at(a) + g[ia]) * (mesh.x(ia) - a);
  for (std::size_t i = ia; i < ib; ++i) sum += 0.5 * (g[i] + g[i + 1]) * mesh.dx;
  sum += 0.5 * (g[ib] + value_at(b)) * (b - mesh.x(ib));
  return sum;
}

struct ConeNorms {
  double n0 = 0.0, n1 = 0.0, n2 = 0.0;
};

/// Rescaled light-cone norms of (u, u_t, grad u) on B(x0, T - t).
inline ConeNorms cone_norms(const PhysicalState& s, const ModelParams& m, double x0, double T) {
  const Mesh& mesh = s.mesh;
  const double tau = T - s.t;
  if (!(tau > 0.0) || !(tau < 1.0)) throw DomainError("cone_norms needs 0 < T - t < 1");
  if (tau < 4.0 * mesh.dx) throw ResolutionError("light-cone ball smaller than 4 mesh cells");
  const auto grad = gradient(mesh, s.u);
  std::vector<double> g0(mesh.n), g1(mesh.n), g2(mesh.n);
  auto fill = [&](double wgt, std::size_t i) {
    g0[i] = wgt * s.u[i] * s.u[i];
    g1[i] = wgt * s.u_t[i] * s.u_t[i];
    g2[i] = wgt * grad[i] * grad[i];
  };
  double l0 = 0, l1 = 0, l2 = 0;
  if (mesh.geometry == Geometry::Line) {
    if (x0 - tau < mesh.left() - 1e-12 || x0 + tau > mesh.right() + 1e-12)
      throw DomainError("light-cone ball leaves the mesh");
    for (std::size_t i = 0; i < mesh.n; ++i) fill(1.0, i);
    l0 = pl_integral(mesh, g0, x0 - tau, x0 + tau);
    l1 = pl_integral(mesh, g1, x0 - tau, x0 + tau);
    l2 = pl_integral(mesh, g2, x0 - tau, x0 + tau);
  } else {
    if (x0 != 0.0) throw DomainError("radial cone norms are centred at the origin");
    if (tau > mesh.right() + 1e-12) throw DomainError("light-cone ball leaves the mesh");
    for (std::size_t i = 0; i < mesh.n; ++i) fill(std::pow(mesh.x(i), mesh.N - 1), i);
    const double area = sphere_area(mesh.N);
    l0 = area * pl_integral(mesh, g0, 0.0, tau);
    l1 = area * pl_integral(mesh, g1, 0.0, tau);
    l2 = area * pl_integral(mesh, g2, 0.0, tau);
  }
  const double psi = psi_tau(tau, m);
  const double scale = std::pow(tau, 0.5 * mesh.N);
  return {std::sqrt(l0) / scale / psi, tau / psi * std::sqrt(l1) / scale, tau / psi * std::sqrt(l2) / scale};
}

/// Initial data from a descriptor string: constant:c | constant:c,v | gaussian:amp,width | file:path (CSV x,u,u_t).
inline PhysicalState make_initial_state(const Mesh& mesh, const std::string& ic) {
  PhysicalState s;
  s.mesh = mesh;
  s.u.assign(mesh.n, 0.0);
  s.u_t.assign(mesh.n, 0.0);
  const auto colon = ic.find(':');
  const std::string kind = ic.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : ic.substr(colon + 1);
  auto numbers = [&](const std::string& text) {
    std::vector<double> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(item, &used));
        if (used != item.size()) throw ConfigError("bad number in phys.ic: " + item);
      } catch (const std::logic_error&) {
        throw ConfigError("bad number in phys.ic: " + item);
      }
    }
    return v;
  };
  if (kind == "constant") {
    const auto v = numbers(arg);
    if (v.empty() || v.size() > 2) throw ConfigError("phys.ic constant:c[,v] expected");
    s.u.assign(mesh.n, v[0]);
    s.u_t.assign(mesh.n, v.size() > 1 ? v[1] : 0.0);
  } else if (kind == "gaussian") {
    const auto v = numbers(arg);
    if (v.size() != 2 || !(v[1] > 0.0)) throw ConfigError("phys.ic gaussian:amp,width expected");
    for (std::size_t i = 0; i < mesh.n; ++i) s.u[i] = v[0] * std::exp(-std::pow(mesh.x(i) / v[1], 2));
  } else if (kind == "file") {
    std::ifstream in(arg);
    if (!in) throw ConfigError("cannot open phys.ic file: " + arg);
    std::vector<double> xs, us, vs;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || !(std::isdigit(static_cast<unsigned char>(line[0])) || line[0] == '-' || line[0] == '.'))
        continue;
      const auto v = numbers(line);
      if (v.size() < 2) throw ConfigError("phys.ic file rows need x,u[,u_t]");
      xs.push_back(v[0]);
      us.push_back(v[1]);
      vs.push_back(v.size() > 2 ? v[2] : 0.0);
    }
    if (xs.size() < 2) throw ConfigError("phys.ic file has fewer than 2 rows");
    for (std::size_t i = 0; i < mesh.n; ++i) {
      const double x = mesh.x(i);
      auto it = std::lower_bound(xs.begin(), xs.end(), x);
      std::size_t j = std::clamp<std::size_t>(it - xs.begin(), 1, xs.size() - 1);
      const double th = std::clamp((x - xs[j - 1]) / (xs[j] - xs[j - 1]), 0.0, 1.0);
      s.u[i] = (1 - th) * us[j - 1] + th * us[j];
      s.u_t[i] = (1 - th) * vs[j - 1] + th * vs[j];
    }
  } else {
    throw ConfigError("unknown phys.ic kind: " + kind);
  }
  return s;
}

}  // namespace blowup
