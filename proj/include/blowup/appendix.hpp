#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "blowup/errors.hpp"
#include "blowup/model.hpp"

namespace blowup {

struct AsymptoticsReport {
  std::vector<double> u;
  std::vector<double> r1;  // F (p+1) / (u f)
  std::vector<double> r2;  // F2 log^2(2+u^2) / (u f)
  bool r1_tail_monotone = false;
  double r1_last = 0.0;
  bool r1_within_tol = false;
  double r2_last = 0.0;
  double r2_two_decades_back = 0.0;
  bool r2_converged = false;
  bool pass = false;
};

struct AsymptoticsOptions {
  double r1_tol = 0.05;
  double r2_rel_change = 0.10;
  double r2_abs_floor = 1e-6;  // times max |r2| on the grid
  double rel_tol = 1e-10;
};

/// Default grid: 8 points per decade on [1, 1e8].
inline std::vector<double> default_appendix_grid(double lo = 1.0, double hi = 1e8, int per_decade = 8) {
  std::vector<double> u;
  const int n = static_cast<int>(std::lround(std::log10(hi / lo) * per_decade));
  for (int i = 0; i <= n; ++i) u.push_back(lo * std::pow(10.0, static_cast<double>(i) / per_decade));
  return u;
}

inline AsymptoticsReport check_appendix_asymptotics(const ModelParams& m, const std::vector<double>& u_grid,
                                                    const AsymptoticsOptions& opt = {}) {
  validate(m);
  if (u_grid.size() < 3) throw DomainError("appendix grid needs at least 3 points");
  for (std::size_t i = 0; i < u_grid.size(); ++i) {
    if (!(u_grid[i] > 0.0)) throw DomainError("appendix grid must be positive");
    if (i > 0 && !(u_grid[i] > u_grid[i - 1])) throw DomainError("appendix grid must be increasing");
  }
  if (u_grid.back() / u_grid.front() < 1e6 * (1 - 1e-12)) throw DomainError("appendix grid must span >= 6 decades");

  const auto& nl = nonlinearity(m, opt.rel_tol);
  AsymptoticsReport r;
  r.u = u_grid;
  for (double u : u_grid) {
    const double uf = u * nl.f(u);
    const double L = log2pu2(u);
    r.r1.push_back(nl.F(u) * (m.p + 1.0) / uf);
    r.r2.push_back(nl.F2(u) * L * L / uf);
  }

  const std::size_t n = u_grid.size();
  const std::size_t tail = n - std::max<std::size_t>(3, n / 3);
  r.r1_tail_monotone = true;
  for (std::size_t i = tail + 1; i < n; ++i)
    if (std::fabs(r.r1[i] - 1.0) > std::fabs(r.r1[i - 1] - 1.0) * (1.0 + 1e-9) + 1e-14) r.r1_tail_monotone = false;
  r.r1_last = r.r1.back();
  r.r1_within_tol = std::fabs(r.r1_last - 1.0) < opt.r1_tol;

  const double target = u_grid.back() / 100.0;
  std::size_t back = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (std::fabs(std::log(u_grid[i] / target)) < std::fabs(std::log(u_grid[back] / target))) back = i;
  r.r2_last = r.r2.back();
  r.r2_two_decades_back = r.r2[back];
  double peak = 0.0;
  for (double v : r.r2) peak = std::max(peak, std::fabs(v));
  const double scale = std::max(std::fabs(r.r2_last), std::fabs(r.r2_two_decades_back));
  r.r2_converged = std::fabs(r.r2_last - r.r2_two_decades_back) <= opt.r2_rel_change * scale + opt.r2_abs_floor * peak;
  r.pass = r.r1_tail_monotone && r.r1_within_tol && r.r2_converged;
  return r;
}

struct InequalityConstant {
  std::string name;
  double eps = 0.0;     // 0 for the eps-free inequalities
  double coarse = 0.0;  // sup of the ratio on the base grid
  double fine = 0.0;    // same on the doubled grid
  bool finite = false;
  bool stable = false;
};

struct InequalityOptions {
  double s_min = 1.0, s_max = 50.0;
  double z_max = 10.0;
  int n_s = 50, n_z = 201;
  int x_per_decade = 10;  // extra geometric samples in X = phi z, 1e-3 <= X <= 10 phi
  std::vector<double> eps = {0.1, 0.5};
  double stability = 0.10;
  double rel_tol = 1e-10;
};

namespace detail {

struct SupAccumulator {
  double value = 0.0;
  void add(double v) {
    if (std::isnan(v)) value = v;
    else if (!std::isnan(value)) value = std::max(value, v);
  }
};

/// Empirical constants of the appendix inequalities on an n_s x n_z grid.
inline std::vector<std::pair<std::string, double>> inequality_sups(const ModelParams& m, const InequalityOptions& o,
                                                                   int n_s, int n_z, int x_per_decade, double eps) {
  const auto& nl = nonlinearity(m, o.rel_tol);
  SupAccumulator c1, c2, c3, c44, c44b, c4, c4b;
  for (int i = 0; i < n_s; ++i) {
    const double s = o.s_min + (o.s_max - o.s_min) * i / (n_s - 1);
    const double lp = log_phi_s(s, m);
    // uniform z plus geometric X: the ratios peak where X = phi z is O(1),
    // a sliver of width 1/phi that no uniform z grid resolves
    std::vector<double> zs;
    for (int j = 0; j < n_z; ++j) zs.push_back(-o.z_max + 2.0 * o.z_max * j / (n_z - 1));
    const double top = std::log10(o.z_max) + lp / std::log(10.0);
    for (double t = -3.0; t <= top; t += 1.0 / x_per_decade) zs.push_back(std::pow(10.0, t - lp / std::log(10.0)));
    for (double z : zs) {
      const double az = std::fabs(z);
      const double src = std::fabs(nl.scaled_source(s, lp, z));
      const double pot = nl.scaled_potential(s, lp, z);
      if (az > 0.0) {
        // X = phi z. With P = e^{-2(p+1)s/(p-1)} s^{2a/(p-1)}: P X f(X) = s^{-a}|z|^{p+1} log^a(..),
        // P F(X) = pot. Ratios are formed from the scaled values so nothing overflows.
        const double P = std::exp(-(m.p + 1.0) * lp - m.a * std::log(s));
        const double xf = nl.scaled_lp1_log(s, lp, z);
        const double r = xf / pot;
        c1.add(std::max(2.0 * r / (1.0 + std::sqrt(1.0 + 4.0 * r * P / pot)), 1.0 / r));
        c2.add(nl.scaled_F1(s, lp, z) / (P + xf / s));
        c3.add(nl.scaled_F2(s, lp, z) / (P + xf / (s * s)));
      }
      c44.add(src / (1.0 + std::pow(az, m.p + eps)));
      c44b.add(std::pow(az, m.p - eps) / (1.0 + src));
      c4.add(pot / (1.0 + std::pow(az, m.p + 1.0 + eps)));
      c4b.add(std::pow(az, m.p + 1.0 - eps) / (1.0 + pot));
    }
  }
  return {{"sandwich_xf_F", c1.value}, {"F1_bound", c2.value}, {"F2_bound", c3.value}, {"source_upper", c44.value},
          {"source_lower", c44b.value}, {"potential_upper", c4.value}, {"potential_lower", c4b.value}};
}

}  // namespace detail

/// Fitted constants of the sandwich and power-bound inequalities, base grid
/// against doubled grid. Stable means relative change <= o.stability.
inline std::vector<InequalityConstant> check_appendix_inequalities(const ModelParams& m,
                                                                   const InequalityOptions& o = {}) {
  validate(m);
  std::vector<InequalityConstant> out;
  for (std::size_t k = 0; k < o.eps.size(); ++k) {
    const double eps = o.eps[k];
    const auto coarse = detail::inequality_sups(m, o, o.n_s, o.n_z, o.x_per_decade, eps);
    const auto fine = detail::inequality_sups(m, o, 2 * o.n_s - 1, 2 * o.n_z - 1, 2 * o.x_per_decade, eps);
    for (std::size_t i = 0; i < coarse.size(); ++i) {
      const bool eps_free = i < 3;
      if (eps_free && k > 0) continue;
      InequalityConstant c;
      c.name = coarse[i].first;
      c.eps = eps_free ? 0.0 : eps;
      c.coarse = coarse[i].second;
      c.fine = fine[i].second;
      c.finite = std::isfinite(c.coarse) && std::isfinite(c.fine);
      const double scale = std::max({std::fabs(c.coarse), std::fabs(c.fine), 1e-300});
      c.stable = c.finite && std::fabs(c.fine - c.coarse) <= o.stability * scale;
      out.push_back(c);
    }
  }
  return out;
}

}  // namespace blowup
