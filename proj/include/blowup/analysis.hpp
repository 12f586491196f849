#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/LevenbergMarquardt>

#include "blowup/errors.hpp"
#include "blowup/model.hpp"

namespace blowup {

struct RateSample {
  double t = 0.0;
  double amp = 0.0;
};

struct FitOptions {
  double window_lo = 1e-6;  // T - t range used by the fit
  double window_hi = 1e-2;
  bool pin_gamma = false;
  int max_passes = 4;       // window re-selection with the updated T
};

struct BlowupFit {
  double T_fit = 0.0;
  double beta_fit = 0.0;
  double gamma_fit = 0.0;
  double amp_fit = 0.0;
  double residual_rms = 0.0;  // log-amplitude units
  double T_err = 0.0;         // one-sigma from the covariance
  double beta_err = 0.0;
  double gamma_err = 0.0;
  double gamma_first_half = 0.0;   // T held at T_fit, window split at its log-midpoint
  double gamma_second_half = 0.0;
  bool pinned_gamma = false;
  std::size_t samples = 0;
  std::pair<double, double> window{0.0, 0.0};
};

namespace detail {

// Residuals log A_i - (log c - beta log tau_i - gamma log(-log tau_i)), tau_i = t_last + e^eta - t_i.
// Parameters: (log c, beta, [gamma,] eta); eta is dropped when T is held fixed.
struct RateFunctor : Eigen::DenseFunctor<double> {
  const std::vector<RateSample>* data;
  double t_last;
  bool pin_gamma;
  bool fix_T;
  double eta_fixed;

  RateFunctor(const std::vector<RateSample>& d, double tl, bool pin, bool fixT, double eta, int inputs)
      : Eigen::DenseFunctor<double>(inputs, static_cast<int>(d.size())),
        data(&d), t_last(tl), pin_gamma(pin), fix_T(fixT), eta_fixed(eta) {}

  void unpack(const InputType& x, double& lc, double& beta, double& gamma, double& eta) const {
    int k = 0;
    lc = x[k++];
    beta = x[k++];
    gamma = pin_gamma ? 0.0 : x[k++];
    eta = fix_T ? eta_fixed : x[k++];
  }

  int operator()(const InputType& x, ValueType& f) const {
    double lc, beta, gamma, eta;
    unpack(x, lc, beta, gamma, eta);
    const double T = t_last + std::exp(eta);
    for (std::size_t i = 0; i < data->size(); ++i) {
      const double tau = T - (*data)[i].t;
      if (!(tau > 0.0) || !(tau < 1.0)) {
        f[static_cast<Eigen::Index>(i)] = 1e3;
        continue;
      }
      const double L = -std::log(tau);
      f[static_cast<Eigen::Index>(i)] = std::log((*data)[i].amp) - (lc + beta * L - gamma * std::log(L));
    }
    return 0;
  }

  int df(const InputType& x, JacobianType& J) const {
    double lc, beta, gamma, eta;
    unpack(x, lc, beta, gamma, eta);
    const double e = std::exp(eta);
    const double T = t_last + e;
    for (std::size_t i = 0; i < data->size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      const double tau = T - (*data)[i].t;
      int k = 0;
      if (!(tau > 0.0) || !(tau < 1.0)) {
        J.row(r).setZero();
        continue;
      }
      const double L = -std::log(tau);
      J(r, k++) = -1.0;
      J(r, k++) = -L;
      if (!pin_gamma) J(r, k++) = std::log(L);
      // d model / dT = -beta / tau + gamma / (tau L)
      if (!fix_T) J(r, k++) = -(-beta / tau + gamma / (tau * L)) * e;
    }
    return 0;
  }
};

struct LmResult {
  Eigen::VectorXd x;
  double rss = 0.0;
  Eigen::MatrixXd cov;
  bool ok = false;
};

inline LmResult run_lm(RateFunctor& f, Eigen::VectorXd x) {
  Eigen::LevenbergMarquardt<RateFunctor> lm(f);
  lm.setXtol(1e-14);
  lm.setFtol(1e-14);
  lm.setGtol(0.0);
  lm.setMaxfev(4000);
  const auto status = lm.minimize(x);
  LmResult r;
  r.x = x;
  Eigen::VectorXd fv(f.values());
  f(x, fv);
  r.rss = fv.squaredNorm();
  Eigen::MatrixXd J(f.values(), f.inputs());
  f.df(x, J);
  const int dof = std::max(1, f.values() - f.inputs());
  r.cov = (J.transpose() * J).completeOrthogonalDecomposition().pseudoInverse() * (r.rss / dof);
  r.ok = status != Eigen::LevenbergMarquardtSpace::ImproperInputParameters &&
         status != Eigen::LevenbergMarquardtSpace::TooManyFunctionEvaluation && x.allFinite();
  return r;
}

inline std::vector<RateSample> select_window(const std::vector<RateSample>& s, double T, double lo, double hi) {
  std::vector<RateSample> out;
  for (const auto& x : s) {
    const double tau = T - x.t;
    if (tau >= lo && tau <= hi) out.push_back(x);
  }
  return out;
}

}  // namespace detail

/// Least-squares fit of log A = log c - beta log(T-t) - gamma log(-log(T-t)) over (c, beta, gamma, T).
inline BlowupFit fit_rate(const std::vector<RateSample>& series, const ModelParams& m, const FitOptions& o = {}) {
  if (!(o.window_lo > 0.0) || !(o.window_hi > o.window_lo) || !(o.window_hi < 1.0))
    throw ConfigError("fit window must satisfy 0 < lo < hi < 1");
  if (series.size() < 30) throw DomainError("fit_rate needs at least 30 samples");
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (!(series[i].amp > 0.0) || !std::isfinite(series[i].amp)) throw DomainError("fit_rate needs positive amplitudes");
    if (i > 0 && !(series[i].t > series[i - 1].t)) throw DomainError("fit_rate needs increasing times");
  }
  const double beta0 = 2.0 / (m.p - 1.0);
  const double gamma0 = o.pin_gamma ? 0.0 : m.a / (m.p - 1.0);
  // local extrapolation from the last two samples with A ~ tau^{-beta0}
  const auto& l = series.back();
  const auto& q = series[series.size() - 2];
  const double ratio = std::pow(l.amp / q.amp, 1.0 / beta0);
  const double tau_last = ratio > 1.0 ? (l.t - q.t) / (ratio - 1.0) : (l.t - q.t);
  double T = l.t + tau_last;

  BlowupFit fit;
  fit.pinned_gamma = o.pin_gamma;
  fit.window = {o.window_lo, o.window_hi};
  const int inputs = o.pin_gamma ? 3 : 4;
  std::vector<RateSample> win;
  detail::LmResult best;
  for (int pass = 0; pass < o.max_passes; ++pass) {
    auto next = detail::select_window(series, T, o.window_lo, o.window_hi);
    if (pass > 0 && next.size() == win.size()) break;
    win = std::move(next);
    if (win.size() < 30) throw DomainError("fewer than 30 samples inside the fit window");
    double amin = win.front().amp, amax = amin;
    for (const auto& x : win) {
      amin = std::min(amin, x.amp);
      amax = std::max(amax, x.amp);
    }
    if (amax < 1e3 * amin) throw DomainError("amplitudes in the fit window span less than 3 decades");
    const double t_last = series.back().t;
    Eigen::VectorXd x(inputs);
    const double L = -std::log(T - win.back().t);
    int k = 0;
    x[k++] = std::log(win.back().amp) - beta0 * L + gamma0 * std::log(L);
    x[k++] = beta0;
    if (!o.pin_gamma) x[k++] = gamma0;
    x[k++] = std::log(T - t_last);
    detail::RateFunctor f(win, t_last, o.pin_gamma, false, 0.0, inputs);
    best = detail::run_lm(f, x);
    if (!best.ok) {
      throw ConvergenceError("rate fit did not converge (best T=" + std::to_string(t_last + std::exp(best.x[inputs - 1])) +
                                 ")",
                             std::sqrt(best.rss / win.size()));
    }
    T = t_last + std::exp(best.x[inputs - 1]);
  }
  const double t_last = series.back().t;
  int k = 0;
  fit.amp_fit = std::exp(best.x[k++]);
  fit.beta_fit = best.x[k];
  fit.beta_err = std::sqrt(std::max(0.0, best.cov(k, k)));
  ++k;
  if (!o.pin_gamma) {
    fit.gamma_fit = best.x[k];
    fit.gamma_err = std::sqrt(std::max(0.0, best.cov(k, k)));
    ++k;
  }
  const double e = std::exp(best.x[k]);
  fit.T_fit = t_last + e;
  fit.T_err = e * std::sqrt(std::max(0.0, best.cov(k, k)));
  fit.residual_rms = std::sqrt(best.rss / win.size());
  fit.samples = win.size();

  // split-half gamma with T held at T_fit
  if (!o.pin_gamma) {
    const double mid = std::sqrt(o.window_lo * o.window_hi);
    for (int half = 0; half < 2; ++half) {
      const auto part = detail::select_window(series, fit.T_fit, half == 0 ? o.window_lo : mid,
                                              half == 0 ? mid : o.window_hi);
      double g = std::numeric_limits<double>::quiet_NaN();
      if (part.size() >= 4) {
        Eigen::VectorXd x(3);
        x << std::log(fit.amp_fit), fit.beta_fit, fit.gamma_fit;
        detail::RateFunctor f(part, t_last, false, true, std::log(e), 3);
        const auto r = detail::run_lm(f, x);
        if (r.ok) g = r.x[2];
      }
      (half == 0 ? fit.gamma_first_half : fit.gamma_second_half) = g;
    }
  }
  return fit;
}

struct ConeSample {
  double t = 0.0;
  double n0 = 0.0;
  double n1 = 0.0;
  double n2 = 0.0;
};

struct WindowReport {
  double sum_min = 0.0;
  double sum_max = 0.0;
  double ratio = 0.0;
  double n0_tail_min = 0.0;
  double n0_tail_max = 0.0;
  double decades = 0.0;
  bool degenerate = false;  // zero solution
  bool pass = false;
  std::string message;
};

/// Window of n0 + n1 + n2 over the series; the tail is the smallest decade of T - t.
inline WindowReport light_cone_window(const std::vector<ConeSample>& series, double T, double threshold = 1e3,
                                    double tail_floor = 1e-3) {
  if (series.size() < 3) throw DomainError("cone series too short");
  double tau_min = std::numeric_limits<double>::infinity(), tau_max = 0.0;
  for (const auto& c : series) {
    const double tau = T - c.t;
    if (!(tau > 0.0)) throw DomainError("cone series sample at or after T");
    tau_min = std::min(tau_min, tau);
    tau_max = std::max(tau_max, tau);
  }
  WindowReport r;
  r.decades = std::log10(tau_max / tau_min);
  if (r.decades < 2.0) throw DomainError("cone series must span at least 2 decades of T - t");
  r.sum_min = std::numeric_limits<double>::infinity();
  r.n0_tail_min = std::numeric_limits<double>::infinity();
  for (const auto& c : series) {
    const double sum = c.n0 + c.n1 + c.n2;
    r.sum_min = std::min(r.sum_min, sum);
    r.sum_max = std::max(r.sum_max, sum);
    if (T - c.t <= 10.0 * tau_min) {
      r.n0_tail_min = std::min(r.n0_tail_min, c.n0);
      r.n0_tail_max = std::max(r.n0_tail_max, c.n0);
    }
  }
  if (r.sum_max == 0.0) {
    r.degenerate = true;
    r.message = "degenerate: zero solution";
    return r;
  }
  r.ratio = r.sum_min > 0.0 ? r.sum_max / r.sum_min : std::numeric_limits<double>::infinity();
  r.pass = r.ratio < threshold && r.n0_tail_min > tail_floor * r.n0_tail_max;
  r.message = r.pass ? "window bounded" : "window unbounded or n0 tail collapses";
  return r;
}

/// T*(x) = T0 - delta0 (x - x0).
inline std::vector<std::pair<double, double>> cone_slices(double x0, double T0, double delta0,
                                                          const std::vector<double>& xs) {
  if (!(delta0 > 0.0) || !(delta0 < 1.0)) throw ConfigError("delta0 must lie in (0, 1)");
  std::vector<std::pair<double, double>> out;
  out.reserve(xs.size());
  for (double x : xs) out.emplace_back(x, T0 - delta0 * (x - x0));
  return out;
}

}  // namespace blowup
