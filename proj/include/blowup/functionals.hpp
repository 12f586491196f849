#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "blowup/errors.hpp"
#include "blowup/model.hpp"
#include "blowup/similarity.hpp"

namespace blowup {

enum class WeightMode { Rho, RhoOver1my2, Rho1my2 };

/// Quadrature of nodal values against rho, rho/(1-|y|^2) or rho (1-|y|^2) on the grid's cells.
inline double weighted_integral(const SimilarityGrid& g, const std::vector<double>& values, WeightMode mode) {
  if (!(g.alpha > 0.0)) throw ConfigError("weight exponent alpha must be > 0");
  if (values.size() != g.n) throw DomainError("weighted_integral: value count differs from grid size");
  const std::vector<double>& wts = mode == WeightMode::Rho ? g.mass : mode == WeightMode::RhoOver1my2 ? g.diss : g.mass_1my2;
  double sum = 0.0;
  for (std::size_t i = 0; i < g.n; ++i) {
    if (!std::isfinite(values[i])) throw DomainError("weighted_integral: non-finite nodal value");
    sum += wts[i] * values[i];
  }
  return sum;
}

struct FunctionalSnapshot {
  double s = 0.0;
  double E = 0.0;
  double J = 0.0;
  double L0 = 0.0;
  double L = 0.0;
  double H_m0 = 0.0;
  double D = 0.0;
  double h1_norm = 0.0;
  double l2_norm = 0.0;
  double lp1_log_norm = 0.0;
};

/// L = exp((p+3)/sqrt(s)) L0 + theta s^{-3/4}.
inline double lyapunov_L(double L0, double s, double p, double theta) {
  return std::exp((p + 3.0) / std::sqrt(s)) * L0 + theta * std::pow(s, -0.75);
}

/// All functionals of one state. The gradient part of E is the face sum the
/// scheme is built on; h1 and l2 norms are unweighted on B.
inline FunctionalSnapshot compute_snapshot(const SimilarityState& st, const DerivedConstants& c,
                                           double quad_rel_tol = 1e-10) {
  const SimilarityGrid& g = *st.grid;
  const ModelParams& m = g.params;
  const double s = st.s;
  if (!(s >= 1.0)) throw DomainError("functionals need s >= 1");
  const auto& nl = nonlinearity(m, quad_rel_tol);
  const double lp = log_phi_s(s, m);
  const double lin = (m.p + 1.0) / ((m.p - 1.0) * (m.p - 1.0));
  double inner = 0.0, bulk = 0.0, D = 0.0, l2 = 0.0, lp1 = 0.0;
  for (std::size_t i = 0; i < g.n; ++i) {
    const double w = st.w[i], v = st.w_s[i];
    inner += g.mass[i] * w * v;
    bulk += g.mass[i] * (0.5 * v * v + lin * w * w - nl.scaled_potential(s, lp, w));
    D += g.diss[i] * v * v;
    l2 += g.plain[i] * w * w;
    lp1 += g.mass[i] * nl.scaled_lp1_log(s, lp, w);
  }
  double grad = 0.0, grad_plain = 0.0;
  for (std::size_t f = 1; f < g.n; ++f) {
    const double d = st.w[f] - st.w[f - 1];
    grad += g.stiff[f] * d * d;
    grad_plain += g.plain_stiff[f] * d * d;
  }
  FunctionalSnapshot out;
  out.s = s;
  out.E = bulk + 0.5 * grad;
  out.J = -inner / s;
  out.L0 = out.E - inner / (s * std::sqrt(s));
  out.L = lyapunov_L(out.L0, s, m.p, c.theta);
  out.H_m0 = out.E - c.m0 * inner / s;
  out.D = D;
  out.l2_norm = std::sqrt(l2);
  out.h1_norm = std::sqrt(l2 + grad_plain);
  out.lp1_log_norm = lp1;
  return out;
}

/// Right-hand side of the energy identity:
/// dE/ds = -2 alpha D + chi1 + chi2 + chi3 + chi4.
inline double energy_identity_rhs(const SimilarityState& st, double quad_rel_tol = 1e-10) {
  const SimilarityGrid& g = *st.grid;
  const ModelParams& m = g.params;
  const double s = st.s;
  const double pm1 = m.p - 1.0;
  double D = 0.0, inner = 0.0;
  for (std::size_t i = 0; i < g.n; ++i) {
    D += g.diss[i] * st.w_s[i] * st.w_s[i];
    inner += g.mass[i] * st.w[i] * st.w_s[i];
  }
  double total = -2.0 * g.alpha * D;
  if (m.a == 0.0) return total;
  const auto& nl = nonlinearity(m, quad_rel_tol);
  const double lp = log_phi_s(s, m);
  std::vector<double> grad;
  nodal_derivative(g, st.w, grad);
  double chi1 = 0.0, chi2 = 0.0, vv = 0.0, ygv = 0.0;
  for (std::size_t i = 0; i < g.n; ++i) {
    const double w = st.w[i], v = st.w_s[i];
    if (w != 0.0) {
      const double L = similarity_log(lp, w);
      chi1 += g.mass[i] * std::pow(std::fabs(w), m.p + 1.0) * std::pow(L, m.a - 1.0) * (L - 4.0 * s / pm1);
      const double F1 = nl.scaled_F1(s, lp, w), F2 = nl.scaled_F2(s, lp, w);
      chi2 += g.mass[i] * ((m.p + 1.0) * F2 - m.a / s * (F1 + F2));
    }
    vv += g.mass[i] * v * v;
    ygv += g.mass[i] * g.y[i] * grad[i] * v;
  }
  chi1 *= m.a / ((m.p + 1.0) * std::pow(s, m.a + 1.0));
  chi2 *= 2.0 / pm1;
  const double drift = 2.0 * m.a / (pm1 * s);
  const double chi3 = g.gamma(s) * inner + drift * vv;
  const double chi4 = drift * ygv;
  return total + chi1 + chi2 + chi3 + chi4;
}

/// Integrals over one checkpoint interval, accumulated by the trapezoid rule on every step.
struct IntervalRecord {
  double s0 = 0.0;
  double s1 = 0.0;
  double D_integral = 0.0;
  double identity_rhs_integral = 0.0;
};

struct SimilarityRunOptions {
  double s_end = 20.0;
  double ds_factor = 0.4;
  double checkpoint_every = 1.0;
  bool track_identity = true;
  double quad_rel_tol = 1e-10;
  std::function<void(const SimilarityState&)> at_checkpoint;
};

struct SimilarityRun {
  std::vector<FunctionalSnapshot> snapshots;  // at s0, s0 + 1, ...
  std::vector<IntervalRecord> intervals;      // between consecutive snapshots
  SimilarityState final_state;
  double ds = 0.0;
  std::size_t steps = 0;
  bool blew_up = false;
  std::string message;
};

/// Evolve with snapshots every checkpoint_every units of s.
inline SimilarityRun run_similarity(SimilarityState st, const DerivedConstants& c, const SimilarityRunOptions& o) {
  if (!(o.s_end > st.s)) throw ConfigError("ss.s1 must exceed ss.s0");
  if (!(o.ds_factor > 0.0) || o.ds_factor > 1.0) throw ConfigError("ss.ds_factor must lie in (0, 1]");
  if (!(o.checkpoint_every > 0.0)) throw ConfigError("checkpoint spacing must be > 0");
  SimilarityRun run;
  run.ds = max_similarity_ds(*st.grid, o.ds_factor);
  auto D_of = [](const SimilarityState& x) {
    double d = 0.0;
    for (std::size_t i = 0; i < x.grid->n; ++i) d += x.grid->diss[i] * x.w_s[i] * x.w_s[i];
    return d;
  };
  run.snapshots.push_back(compute_snapshot(st, c, o.quad_rel_tol));
  if (o.at_checkpoint) o.at_checkpoint(st);
  const double s_start = st.s;
  for (int k = 1;; ++k) {
    const double target = std::min(o.s_end, s_start + o.checkpoint_every * k);
    IntervalRecord rec;
    rec.s0 = st.s;
    double prev_D = D_of(st);
    double prev_R = o.track_identity ? energy_identity_rhs(st, o.quad_rel_tol) : 0.0;
    double prev_s = st.s;
    try {
      st = evolve_selfsimilar(
          st, target, run.ds,
          [&](const SimilarityState& x) {
            const double Dn = D_of(x);
            rec.D_integral += 0.5 * (x.s - prev_s) * (prev_D + Dn);
            prev_D = Dn;
            if (o.track_identity) {
              const double Rn = energy_identity_rhs(x, o.quad_rel_tol);
              rec.identity_rhs_integral += 0.5 * (x.s - prev_s) * (prev_R + Rn);
              prev_R = Rn;
            }
            prev_s = x.s;
            ++run.steps;
            return true;
          },
          o.quad_rel_tol);
    } catch (const SelfSimilarBlowup& e) {
      run.blew_up = true;
      run.message = e.what();
      run.final_state = e.last();
      return run;
    }
    rec.s1 = st.s;
    run.intervals.push_back(rec);
    run.snapshots.push_back(compute_snapshot(st, c, o.quad_rel_tol));
    if (o.at_checkpoint) o.at_checkpoint(st);
    if (target >= o.s_end) break;
  }
  run.final_state = st;
  return run;
}

struct VerdictInterval {
  double s = 0.0;
  double defect = 0.0;
  double tol = 0.0;
  bool pass = false;
};

struct LyapunovVerdict {
  std::vector<VerdictInterval> intervals;
  bool overall_pass = false;
  double theta = 0.0;
  double m0 = 0.0;
  double max_defect = -std::numeric_limits<double>::infinity();
  double identity_residual = 0.0;          // max |E(s1) - E(s0) - int rhs|
  double first_pass_from = std::numeric_limits<double>::quiet_NaN();  // all later intervals pass
};

/// Discrete Lyapunov check: defect = L(s1) - L(s0) + alpha int D, PASS when
/// defect <= c_tol (h^2 + ds^2) max(1, max |L|) on every interval.
inline LyapunovVerdict lyapunov_verdict(const SimilarityRun& run, const DerivedConstants& c, double h, double c_tol = 10.0,
                                        double theta_override = std::numeric_limits<double>::quiet_NaN()) {
  LyapunovVerdict v;
  v.theta = std::isnan(theta_override) ? c.theta : theta_override;
  v.m0 = c.m0;
  if (run.snapshots.size() < 2) {
    v.overall_pass = false;
    return v;
  }
  std::vector<double> L(run.snapshots.size());
  double scale = 1.0;
  for (std::size_t k = 0; k < L.size(); ++k) {
    const auto& sn = run.snapshots[k];
    // re-weight with the requested theta; the stored L used c.theta
    L[k] = sn.L + (v.theta - c.theta) * std::pow(sn.s, -0.75);
    scale = std::max(scale, std::fabs(L[k]));
  }
  const double tol = c_tol * (h * h + run.ds * run.ds) * scale;
  v.overall_pass = true;
  for (std::size_t k = 0; k < run.intervals.size(); ++k) {
    const auto& r = run.intervals[k];
    VerdictInterval iv;
    iv.s = r.s0;
    iv.defect = L[k + 1] - L[k] + c.alpha * r.D_integral;
    iv.tol = tol;
    iv.pass = iv.defect <= tol;
    v.overall_pass = v.overall_pass && iv.pass;
    v.max_defect = std::max(v.max_defect, iv.defect);
    v.identity_residual = std::max(
        v.identity_residual, std::fabs(run.snapshots[k + 1].E - run.snapshots[k].E - r.identity_rhs_integral));
    v.intervals.push_back(iv);
  }
  for (std::size_t k = v.intervals.size(); k-- > 0;) {
    if (!v.intervals[k].pass) break;
    v.first_pass_from = v.intervals[k].s;
  }
  return v;
}

struct H1Growth {
  double slope = 0.0;
  double slope_first_half = 0.0;
  double slope_second_half = 0.0;
  bool degenerate = false;
};

/// Least-squares slope of log h1_norm against log s, overall and per half of the range.
inline H1Growth h1_growth_monitor(const std::vector<FunctionalSnapshot>& snaps) {
  if (snaps.size() < 10) throw DomainError("h1 growth monitor needs at least 10 snapshots");
  if (!(snaps.back().s >= 4.0 * snaps.front().s)) throw DomainError("h1 growth monitor needs s to span a factor 4");
  H1Growth r;
  for (const auto& sn : snaps)
    if (!(sn.h1_norm > 0.0)) {
      r.degenerate = true;
      return r;
    }
  auto slope = [&](std::size_t a, std::size_t b) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double k = static_cast<double>(b - a);
    for (std::size_t i = a; i < b; ++i) {
      const double x = std::log(snaps[i].s), y = std::log(snaps[i].h1_norm);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    return (k * sxy - sx * sy) / (k * sxx - sx * sx);
  };
  const std::size_t n = snaps.size();
  r.slope = slope(0, n);
  r.slope_first_half = slope(0, n / 2 + 1);
  r.slope_second_half = slope(n / 2, n);
  return r;
}

}  // namespace blowup
