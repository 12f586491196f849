#pragma once

// Independent reference computations for the test suite. Nothing here calls
// into the library's quadrature or integrators.

#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

// Golden values, 25-digit arbitrary precision quadrature, p = 3, a = 1.
inline constexpr double kF_2_p3_a1 = 6.068425588244110311854664;
inline constexpr double kF_10_p3_a1 = 10358.50020757795337688339;
inline constexpr double kF2_10_p3_a1 = 46.06817436727567422835522;

inline double f(double u, double p, double a) {
  return std::copysign(std::pow(std::fabs(u), p) * std::pow(std::log(2.0 + u * u), a), u);
}

/// Composite Simpson on [lo, hi] with n (even) panels.
inline double simpson(const std::function<double(double)>& g, double lo, double hi, int n) {
  const double h = (hi - lo) / n;
  double sum = g(lo) + g(hi);
  for (int i = 1; i < n; ++i) sum += (i % 2 ? 4.0 : 2.0) * g(lo + i * h);
  return sum * h / 3.0;
}

/// Simpson with one Richardson step: (16 S(2n) - S(n)) / 15.
inline double simpson_richardson(const std::function<double(double)>& g, double lo, double hi, int n) {
  return (16.0 * simpson(g, lo, hi, 2 * n) - simpson(g, lo, hi, n)) / 15.0;
}

inline double F(double u, double p, double a, int n = 20000) {
  const double au = std::fabs(u);
  return simpson_richardson([&](double v) { return f(v, p, a); }, 0.0, au, n);
}

/// Classical RK4 for u'' = f(u), fixed step.
struct OdeState {
  double t, u, v;
};

inline OdeState rk4_step(OdeState s, double h, double p, double a) {
  auto acc = [&](double u) { return f(u, p, a); };
  const double k1u = s.v, k1v = acc(s.u);
  const double k2u = s.v + 0.5 * h * k1v, k2v = acc(s.u + 0.5 * h * k1u);
  const double k3u = s.v + 0.5 * h * k2v, k3v = acc(s.u + 0.5 * h * k2u);
  const double k4u = s.v + h * k3v, k4v = acc(s.u + h * k3u);
  return {s.t + h, s.u + h / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u),
          s.v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)};
}

/// Integrates u'' = f(u) from (0, c, 0) with step h*(c/u)^{(p-1)/2} until u >= u_stop.
/// Returns the trajectory.
inline std::vector<OdeState> ode_from_rest(double c, double p, double a, double u_stop, double h0) {
  std::vector<OdeState> out{{0.0, c, 0.0}};
  OdeState s = out.back();
  while (s.u < u_stop) {
    const double h = h0 * std::pow(c / s.u, 0.5 * (p - 1.0));
    s = rk4_step(s, h, p, a);
    out.push_back(s);
  }
  return out;
}

/// Blow-up time of u'' = f(u), u(0) = c > 0, u'(0) = 0:
/// T = int_c^inf dv / sqrt(2 (F(v) - F(c))). Substitution v = c / x^k, x in (0,1],
/// with k = 2/(p-1) and a sqrt-singularity split at x = 1.
inline double blowup_time_from_rest(double c, double p, double a) {
  const double k = 2.0 / (p - 1.0);
  auto Fv = [&](double v) {
    // F(v) - F(c) as int_c^v f, Simpson on log scale
    const double lo = std::log(c), hi = std::log(v);
    if (hi <= lo) return 0.0;
    return simpson_richardson([&](double l) { const double x = std::exp(l); return f(x, p, a) * x; }, lo, hi, 500);
  };
  // Near x = 1: v = c(1 + d), F(v) - F(c) ~ f(c) c d; substitute x = 1 - y^2.
  auto integrand_y = [&](double y) {
    if (y == 0.0) {
      const double dvdy_over = 2.0 * c * k;  // dv/dy ~ 2 k c y, sqrt(2 f(c) c k y^2)
      return dvdy_over / std::sqrt(2.0 * f(c, p, a) * c * k);
    }
    const double x = 1.0 - y * y;
    if (x <= 0.0) return 0.0;
    const double v = c * std::pow(x, -k);
    const double dv = c * k * std::pow(x, -k - 1.0) * 2.0 * y;
    const double G = Fv(v);
    if (!(G > 0.0) || !std::isfinite(G)) return 0.0;
    return dv / std::sqrt(2.0 * G);
  };
  return simpson_richardson(integrand_y, 0.0, 1.0 - 1e-9, 4000);
}

}  // namespace oracle
