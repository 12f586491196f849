#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "blowup/errors.hpp"
#include "blowup/model.hpp"
#include "blowup/phys_solver.hpp"

namespace blowup {

/// Cell-centred mapped grid on B(0,1) with the weights of the self-similar scheme.
///
/// y = (1 - mu) xi + mu sin(pi xi / 2) with xi uniform; nodes are cell centres
/// so no node sits on |y| = 1. Line: xi in (-1, 1). Radial: xi in (0, 1), W = |S^{N-1}| r^{N-1}.
///
/// Face f (0..n) separates nodes f-1 and f; faces 0 and n are the ends.
///   mass[i]   int_cell rho W
///   stiff[f]  (1-y^2) rho W at the face / node spacing
///   skew[f]   mean of y rho W over [y_{f-1}, y_f], end half-cells folded into the
///             first and last interior faces
///   diss[i]   ((p+3)/(p-1) mass[i] - skew[i+1] + skew[i]) / (2 alpha)
/// With these, sum_i mass_i v_i (scheme rhs)_i reproduces the energy identity
/// term by term, and diss is a quadrature for the weight rho / (1 - y^2).
/// Which gamma(s) enters the linear term: the exact change-of-variables
/// coefficient or the published closed form.
enum class GammaForm { Exact, Published };

struct SimilarityGrid {
  Geometry geometry = Geometry::Line;
  ModelParams params;
  double alpha = 1.0;
  double mu = 0.25;
  GammaForm gamma_form = GammaForm::Exact;
  std::size_t n = 0;
  double h = 0.0;  // xi spacing
  std::vector<double> y;
  std::vector<double> mass, mass_1my2, plain, diss;
  std::vector<double> stiff, plain_stiff, skew;  // size n + 1

  double node_spacing(std::size_t f) const { return y[f] - y[f - 1]; }
  double gamma(double s) const { return gamma_form == GammaForm::Exact ? gamma_s_exact(s, params) : gamma_s(s, params); }
};

namespace detail {

// Geometry of the map in terms of z = 1 - xi in [0, 1] (right half), exact near z = 0.
struct MapPoint {
  double y, one_minus_y, dy_dxi;
};

inline MapPoint map_from_right(double z, double mu) {
  const double s = std::sin(0.25 * std::numbers::pi * z);
  const double omy = (1.0 - mu) * z + 2.0 * mu * s * s;
  return {1.0 - omy, omy, (1.0 - mu) + 0.5 * mu * std::numbers::pi * std::sin(0.5 * std::numbers::pi * z)};
}

inline double map_xi(double xi, double mu) { return (1.0 - mu) * xi + mu * std::sin(0.5 * std::numbers::pi * xi); }

// int over xi in [a, b] (0 <= a < b <= 1) of g(y, 1-y) dy/dxi, tanh-sinh in z = 1 - xi.
template <class G>
double right_half_integral(const G& g, double a, double b, double mu) {
  thread_local boost::math::quadrature::tanh_sinh<double> ts;
  return ts.integrate(
      [&](double z) {
        const MapPoint q = map_from_right(z, mu);
        return g(q.y, q.one_minus_y) * q.dy_dxi;
      },
      1.0 - b, 1.0 - a, 1e-13);
}

// int over xi in [a, b] of g(y, 1-|y|) dy/dxi for the line (symmetric map) or radial grid.
// parity = +1 for even integrands, -1 for odd ones.
template <class G>
double cell_integral(const G& g, double a, double b, double mu, int parity) {
  if (a >= 0.0) return right_half_integral(g, a, b, mu);
  if (b <= 0.0) return parity * right_half_integral(g, -b, -a, mu);
  return parity * right_half_integral(g, 0.0, -a, mu) + right_half_integral(g, 0.0, b, mu);
}

}  // namespace detail

inline SimilarityGrid make_similarity_grid(Geometry geometry, const ModelParams& m, std::size_t n, double mu = 0.25) {
  validate(m);
  if (geometry == Geometry::Line && m.N != 1) throw ConfigError("line similarity grid needs model.N = 1");
  if (geometry == Geometry::Radial && m.N < 2) throw ConfigError("radial similarity grid needs model.N >= 2");
  if (n < 8) throw ConfigError("ss.grid_n must be >= 8");
  if (!(mu >= 0.0) || !(mu < 1.0)) throw ConfigError("ss.map_mu must lie in [0, 1)");
  SimilarityGrid g;
  g.geometry = geometry;
  g.params = m;
  g.alpha = weight_exponent(m);
  g.mu = mu;
  g.n = n;
  const bool line = geometry == Geometry::Line;
  const double xi0 = line ? -1.0 : 0.0;
  g.h = (line ? 2.0 : 1.0) / static_cast<double>(n);
  const double alpha = g.alpha;
  const int N = m.N;
  const double area = line ? 1.0 : sphere_area(N);

  auto xi_face = [&](std::size_t f) { return xi0 + g.h * static_cast<double>(f); };
  auto W = [&](double y) { return line ? 1.0 : area * std::pow(y, N - 1); };
  // (1 - y^2) from (y, 1 - |y|) without cancellation
  auto one_m_y2 = [](double y, double omy) { return omy * (1.0 + std::fabs(y)); };
  auto rho = [&](double y, double omy) { return std::pow(one_m_y2(y, omy), alpha); };

  g.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) g.y[i] = detail::map_xi(xi0 + g.h * (static_cast<double>(i) + 0.5), mu);

  g.mass.resize(n);
  g.mass_1my2.resize(n);
  g.plain.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = xi_face(i), b = xi_face(i + 1);
    g.mass[i] = detail::cell_integral([&](double y, double omy) { return rho(y, omy) * W(y); }, a, b, mu, 1);
    g.mass_1my2[i] = detail::cell_integral(
        [&](double y, double omy) { return rho(y, omy) * one_m_y2(y, omy) * W(y); }, a, b, mu, 1);
    g.plain[i] = detail::cell_integral([&](double y, double) { return W(y); }, a, b, mu, 1);
  }

  g.stiff.assign(n + 1, 0.0);
  g.plain_stiff.assign(n + 1, 0.0);
  g.skew.assign(n + 1, 0.0);
  auto node_xi = [&](std::size_t i) { return xi0 + g.h * (static_cast<double>(i) + 0.5); };
  auto yrw = [&](double y, double omy) { return y * rho(y, omy) * W(y); };
  for (std::size_t f = 1; f < n; ++f) {
    const double d = g.node_spacing(f);
    const double xf = xi_face(f);
    const double yf = detail::map_xi(xf, mu);
    const double omy = xf >= 0.0 ? detail::map_from_right(1.0 - xf, mu).one_minus_y
                                 : detail::map_from_right(1.0 + xf, mu).one_minus_y;
    g.stiff[f] = one_m_y2(yf, omy) * rho(yf, omy) * W(yf) / d;
    g.plain_stiff[f] = W(yf) / d;
    g.skew[f] = detail::cell_integral(yrw, node_xi(f - 1), node_xi(f), mu, -1) / d;
  }
  // y rho W g' on the end half-cells, with g' from the adjacent node difference
  g.skew[n - 1] += detail::cell_integral(yrw, node_xi(n - 1), xi_face(n), mu, -1) / g.node_spacing(n - 1);
  if (line) g.skew[1] += detail::cell_integral(yrw, xi_face(0), node_xi(0), mu, -1) / g.node_spacing(1);

  const double damp = (m.p + 3.0) / (m.p - 1.0);
  g.diss.resize(n);
  for (std::size_t i = 0; i < n; ++i) g.diss[i] = (damp * g.mass[i] - g.skew[i + 1] + g.skew[i]) / (2.0 * alpha);
  return g;
}

/// Largest stable ds for a given factor: factor * min over faces of spacing / (1 + |y|).
inline double max_similarity_ds(const SimilarityGrid& g, double factor = 0.4) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t f = 1; f < g.n; ++f) {
    const double speed = 1.0 + std::max(std::fabs(g.y[f - 1]), std::fabs(g.y[f]));
    best = std::min(best, g.node_spacing(f) / speed);
  }
  // end node: twice its distance to the boundary, speed at most 2
  best = std::min(best, (1.0 - std::fabs(g.y.back())));
  return factor * best;
}

/// Second-order nodal derivative d/dy: quadratic through three nodes,
/// one-sided at the line ends, even reflection at the radial origin.
inline void nodal_derivative(const SimilarityGrid& g, const std::vector<double>& w, std::vector<double>& out) {
  const std::size_t n = g.n;
  out.resize(n);
  auto quad = [](double x0, double x1, double x2, double f0, double f1, double f2, double at) {
    // derivative at `at` of the quadratic through (x_k, f_k)
    const double d0 = (2 * at - x1 - x2) / ((x0 - x1) * (x0 - x2));
    const double d1 = (2 * at - x0 - x2) / ((x1 - x0) * (x1 - x2));
    const double d2 = (2 * at - x0 - x1) / ((x2 - x0) * (x2 - x1));
    return f0 * d0 + f1 * d1 + f2 * d2;
  };
  const auto& y = g.y;
  for (std::size_t i = 1; i + 1 < n; ++i) out[i] = quad(y[i - 1], y[i], y[i + 1], w[i - 1], w[i], w[i + 1], y[i]);
  if (g.geometry == Geometry::Line) {
    out[0] = quad(y[0], y[1], y[2], w[0], w[1], w[2], y[0]);
  } else {
    out[0] = quad(-y[0], y[0], y[1], w[0], w[0], w[1], y[0]);
  }
  out[n - 1] = quad(y[n - 3], y[n - 2], y[n - 1], w[n - 3], w[n - 2], w[n - 1], y[n - 1]);
}

struct SimilarityState {
  std::shared_ptr<const SimilarityGrid> grid;
  std::vector<double> w;
  std::vector<double> w_s;
  double s = 1.0;
  double x0 = 0.0;
  double T0 = 1.0;
};

/// Raised when a self-similar step produces non-finite values; carries the last finite state.
class SelfSimilarBlowup : public std::runtime_error {
 public:
  explicit SelfSimilarBlowup(SimilarityState last)
      : std::runtime_error("non-finite self-similar state at s=" + std::to_string(last.s)), last_(std::move(last)) {}
  const SimilarityState& last() const { return last_; }

 private:
  SimilarityState last_;
};

namespace detail {

/// Right-hand side of the first-order system (w, v = w_s) at time s.
inline void similarity_rhs(const SimilarityGrid& g, const Nonlinearity& nl, double s, const std::vector<double>& w,
                           const std::vector<double>& v, std::vector<double>& dw, std::vector<double>& dv,
                           std::vector<double>& grad) {
  const ModelParams& m = g.params;
  const std::size_t n = g.n;
  const double pm1 = m.p - 1.0;
  const double drift = 2.0 * m.a / (pm1 * s);
  const double lin = -2.0 * (m.p + 1.0) / (pm1 * pm1) + g.gamma(s);
  const double damp = (m.p + 3.0) / pm1 - drift;
  const double lp = log_phi_s(s, m);
  dw = v;
  dv.resize(n);
  if (m.a != 0.0) nodal_derivative(g, w, grad);
  for (std::size_t i = 0; i < n; ++i) {
    // stiff and skew vanish on the end faces
    double flux = 0.0, mixed = 0.0;
    if (i + 1 < n) {
      flux += g.stiff[i + 1] * (w[i + 1] - w[i]);
      mixed += g.skew[i + 1] * (v[i] - v[i + 1]);
    }
    if (i > 0) {
      flux -= g.stiff[i] * (w[i] - w[i - 1]);
      mixed += g.skew[i] * (v[i - 1] - v[i]);
    }
    double r = (flux + mixed) / g.mass[i] + lin * w[i] - damp * v[i] + nl.scaled_source(s, lp, w[i]);
    if (m.a != 0.0) r += drift * g.y[i] * grad[i];
    dv[i] = r;
  }
}

}  // namespace detail

/// One RK4 step of the self-similar equation on the first-order system (w, w_s).
inline SimilarityState step_selfsimilar(const SimilarityState& st, double ds, double quad_rel_tol = 1e-10) {
  const SimilarityGrid& g = *st.grid;
  if (!(st.s >= 1.0)) throw DomainError("self-similar evolution needs s >= 1");
  if (!(ds > 0.0) || ds > max_similarity_ds(g, 1.0)) throw ConfigError("ds violates the self-similar CFL bound");
  const auto& nl = nonlinearity(g.params, quad_rel_tol);
  const std::size_t n = g.n;
  std::vector<double> k1w, k1v, k2w, k2v, k3w, k3v, k4w, k4v, grad, tw(n), tv(n);
  detail::similarity_rhs(g, nl, st.s, st.w, st.w_s, k1w, k1v, grad);
  for (std::size_t i = 0; i < n; ++i) {
    tw[i] = st.w[i] + 0.5 * ds * k1w[i];
    tv[i] = st.w_s[i] + 0.5 * ds * k1v[i];
  }
  detail::similarity_rhs(g, nl, st.s + 0.5 * ds, tw, tv, k2w, k2v, grad);
  for (std::size_t i = 0; i < n; ++i) {
    tw[i] = st.w[i] + 0.5 * ds * k2w[i];
    tv[i] = st.w_s[i] + 0.5 * ds * k2v[i];
  }
  detail::similarity_rhs(g, nl, st.s + 0.5 * ds, tw, tv, k3w, k3v, grad);
  for (std::size_t i = 0; i < n; ++i) {
    tw[i] = st.w[i] + ds * k3w[i];
    tv[i] = st.w_s[i] + ds * k3v[i];
  }
  detail::similarity_rhs(g, nl, st.s + ds, tw, tv, k4w, k4v, grad);
  SimilarityState out = st;
  out.s = st.s + ds;
  for (std::size_t i = 0; i < n; ++i) {
    out.w[i] = st.w[i] + ds / 6.0 * (k1w[i] + 2 * k2w[i] + 2 * k3w[i] + k4w[i]);
    out.w_s[i] = st.w_s[i] + ds / 6.0 * (k1v[i] + 2 * k2v[i] + 2 * k3v[i] + k4v[i]);
    if (!std::isfinite(out.w[i]) || !std::isfinite(out.w_s[i])) throw SelfSimilarBlowup(st);
  }
  return out;
}

/// Rho-weighted mean of w.
inline double weighted_mean(const SimilarityState& st) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < st.grid->n; ++i) {
    num += st.grid->mass[i] * st.w[i];
    den += st.grid->mass[i];
  }
  return num / den;
}

/// Number of equal steps of size <= ds_max covering [s, s_end].
inline std::size_t steps_for(double s, double s_end, double ds_max) {
  return static_cast<std::size_t>(std::max(1.0, std::ceil((s_end - s) / ds_max - 1e-12)));
}

/// Evolve to s_end with equal steps no larger than ds_max; `each_step` sees every state.
inline SimilarityState evolve_selfsimilar(SimilarityState st, double s_end, double ds_max,
                                          const std::function<bool(const SimilarityState&)>& each_step = {},
                                          double quad_rel_tol = 1e-10) {
  if (!(s_end >= st.s)) throw DomainError("evolve_selfsimilar needs s_end >= s");
  if (s_end == st.s) return st;
  const double s_start = st.s;
  const std::size_t k = steps_for(s_start, s_end, ds_max);
  const double ds = (s_end - s_start) / static_cast<double>(k);
  for (std::size_t j = 1; j <= k; ++j) {
    st = step_selfsimilar(st, ds, quad_rel_tol);
    st.s = j == k ? s_end : s_start + ds * static_cast<double>(j);
    if (each_step && !each_step(st)) break;
  }
  return st;
}

/// w = kappa_a (1 + eps (1 - |y|^2)) + shift, w_s = 0.
inline SimilarityState perturbed_kappa_state(std::shared_ptr<const SimilarityGrid> g, double s0, double eps,
                                             double shift = 0.0) {
  SimilarityState st;
  st.grid = g;
  st.s = s0;
  const double k = kappa_a(g->params);
  st.w.resize(g->n);
  st.w_s.assign(g->n, 0.0);
  for (std::size_t i = 0; i < g->n; ++i) st.w[i] = k * (1.0 + eps * (1.0 - g->y[i] * g->y[i])) + shift;
  return st;
}

/// Positive constant solution of the frozen-s equation
/// s^{-a} w^{p-1} log^a(2 + phi^2 w^2) = 2(p+1)/(p-1)^2 - gamma(s); kappa_a when a = 0.
inline double equilibrium_amplitude(double s, const ModelParams& m, GammaForm form = GammaForm::Exact) {
  const double k = kappa_a(m);
  if (m.a == 0.0) return k;
  const double target = 2.0 * (m.p + 1.0) / ((m.p - 1.0) * (m.p - 1.0)) -
                        (form == GammaForm::Exact ? gamma_s_exact(s, m) : gamma_s(s, m));
  if (!(target > 0.0)) throw DomainError("no positive equilibrium amplitude at this s");
  const double lp = log_phi_s(s, m);
  // log of the left side is increasing in log w
  auto G = [&](double lw) {
    const double w = std::exp(lw);
    return (m.p - 1.0) * lw + m.a * (std::log(similarity_log(lp, w)) - std::log(s)) - std::log(target);
  };
  double lo = std::log(k) - 20.0, hi = std::log(k) + 20.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::fabs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (G(mid) > 0.0 ? hi : lo) = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

struct ShootingResult {
  double shift = 0.0;
  int iterations = 0;
  double s_reached = 0.0;        // of the accepted shift
  double final_deviation = 0.0;  // mean w - equilibrium amplitude at s_reached
  bool bounded = false;          // accepted run stayed inside the band up to s_end
};

/// Shooting on the constant shift c of perturbed_kappa_state. The constant
/// mode is the unstable direction of the profile, so for most c the run leaves
/// the band |mean w - w_eq(s)| < band kappa. The miss function is the deviation
/// at s_end, saturated at +-band kappa on escape; it is increasing in c and
/// solved by the Illinois variant of regula falsi to |miss| <= miss_tol kappa.
inline ShootingResult shoot_perturbed_kappa(std::shared_ptr<const SimilarityGrid> g, double s0, double s_end,
                                            double eps, double ds_max, double band = 0.5, double miss_tol = 1e-3,
                                            int max_iter = 100, double quad_rel_tol = 1e-10) {
  const double k = kappa_a(g->params);
  ShootingResult best;
  auto miss = [&](double c) {
    ShootingResult r;
    r.shift = c;
    int side = 0;
    double dev = 0.0;
    r.s_reached = s0;
    try {
      evolve_selfsimilar(
          perturbed_kappa_state(g, s0, eps, c), s_end, ds_max,
          [&](const SimilarityState& x) {
            r.s_reached = x.s;
            dev = weighted_mean(x) - equilibrium_amplitude(x.s, g->params, g->gamma_form);
            if (dev > band * k) side = 1;
            if (dev < -band * k) side = -1;
            return side == 0;
          },
          quad_rel_tol);
    } catch (const SelfSimilarBlowup&) {
      side = 1;
    }
    r.bounded = side == 0;
    r.final_deviation = side == 0 ? dev : side * band * k;
    return r;
  };
  double lo = -k, hi = k;
  ShootingResult rl = miss(lo), rh = miss(hi);
  int it = 2;
  if (!(rl.final_deviation < 0.0) || !(rh.final_deviation > 0.0)) {
    best = std::fabs(rl.final_deviation) < std::fabs(rh.final_deviation) ? rl : rh;
    best.iterations = it;
    return best;
  }
  best = rl;
  double fl = rl.final_deviation, fh = rh.final_deviation;
  int last = 0;  // +1 when hi moved last, -1 when lo moved last
  for (; it < max_iter; ++it) {
    // escaped probes carry little information: bisect until both ends are bounded
    double c = 0.5 * (lo + hi);
    if (rl.bounded && rh.bounded) {
      const double rf = (lo * fh - hi * fl) / (fh - fl);
      if (rf > lo && rf < hi) c = rf;
    }
    const ShootingResult r = miss(c);
    if (!best.bounded || (r.bounded && std::fabs(r.final_deviation) < std::fabs(best.final_deviation))) best = r;
    if (r.bounded && std::fabs(r.final_deviation) <= miss_tol * k) break;
    if (r.final_deviation > 0.0) {
      hi = c;
      rh = r;
      fh = r.final_deviation;
      if (last == 1) fl *= 0.5;
      last = 1;
    } else {
      lo = c;
      rl = r;
      fl = r.final_deviation;
      if (last == -1) fh *= 0.5;
      last = -1;
    }
    if (hi - lo <= 4 * std::numeric_limits<double>::epsilon() * k) break;
  }
  best.iterations = it + 1;
  return best;
}

namespace detail {

// 4-point Lagrange value and derivative on a uniform mesh; radial meshes are
// extended evenly through r = 0.
struct Interp {
  double u, u_t, u_x;
};

inline Interp lagrange4(const PhysicalState& ps, double x) {
  const Mesh& mesh = ps.mesh;
  const double pos = (x - mesh.origin) / mesh.dx;
  const long n = static_cast<long>(mesh.n);
  long i = static_cast<long>(std::floor(pos));
  const bool radial = mesh.geometry == Geometry::Radial;
  i = std::clamp<long>(i, radial ? 0L : 1L, n - 3);
  auto at = [&](const std::vector<double>& v, long j) { return v[static_cast<std::size_t>(j < 0 ? -j : j)]; };
  const double t = pos - static_cast<double>(i);  // nodes at -1, 0, 1, 2
  const double tm = t + 1, t1 = t - 1, t2 = t - 2;
  const double l[4] = {-t * t1 * t2 / 6.0, tm * t1 * t2 / 2.0, -tm * t * t2 / 2.0, tm * t * t1 / 6.0};
  const double dl[4] = {-(t1 * t2 + t * t2 + t * t1) / 6.0, (t1 * t2 + tm * t2 + tm * t1) / 2.0,
                        -(t * t2 + tm * t2 + tm * t) / 2.0, (t * t1 + tm * t1 + tm * t) / 6.0};
  Interp r{0, 0, 0};
  for (int k = 0; k < 4; ++k) {
    const long j = i - 1 + k;
    r.u += l[k] * at(ps.u, j);
    r.u_t += l[k] * at(ps.u_t, j);
    r.u_x += dl[k] * at(ps.u, j) / mesh.dx;
  }
  return r;
}

}  // namespace detail

/// Similarity variables of a physical state: y = (x - x0)/(T0 - t), s = -log(T0 - t),
/// w = u / psi_{T0}(t), w_s = tau (u_t - y u_x) / psi - (2/(p-1) - a/((p-1) s)) w.
inline SimilarityState to_similarity(const PhysicalState& ps, const ModelParams& m, double x0, double T0,
                                     std::shared_ptr<const SimilarityGrid> g) {
  const double tau = T0 - ps.t;
  if (!(tau > 0.0) || !(tau < 1.0)) throw DomainError("to_similarity needs 0 < T0 - t < 1");
  if (g->geometry != ps.mesh.geometry) throw ConfigError("similarity grid and physical mesh geometry differ");
  const Mesh& mesh = ps.mesh;
  if (mesh.geometry == Geometry::Radial) {
    if (x0 != 0.0) throw DomainError("radial geometry needs x0 = 0");
    if (tau > mesh.right()) throw DomainError("backward cone leaves the physical mesh");
  } else if (x0 - tau < mesh.left() || x0 + tau > mesh.right()) {
    throw DomainError("backward cone leaves the physical mesh");
  }
  SimilarityState st;
  st.grid = g;
  st.s = -std::log(tau);
  st.x0 = x0;
  st.T0 = T0;
  const double psi = psi_tau(tau, m);
  const double dlogpsi = (2.0 - m.a / st.s) / (m.p - 1.0);
  st.w.resize(g->n);
  st.w_s.resize(g->n);
  for (std::size_t j = 0; j < g->n; ++j) {
    const double y = g->y[j];
    const auto q = detail::lagrange4(ps, x0 + y * tau);
    st.w[j] = q.u / psi;
    st.w_s[j] = tau * (q.u_t - y * q.u_x) / psi - dlogpsi * st.w[j];
  }
  return st;
}

}  // namespace blowup
