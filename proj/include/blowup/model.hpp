#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>
#include <tuple>

#include "blowup/antiderivative.hpp"
#include "blowup/errors.hpp"

namespace blowup {

struct ModelParams {
  double p = 3.0;
  double a = 0.0;
  int N = 1;
};

/// Conformal exponent 1 + 4/(N-1); +inf for N = 1.
inline double conformal_exponent(int N) {
  return N <= 1 ? std::numeric_limits<double>::infinity() : 1.0 + 4.0 / (N - 1);
}

inline double weight_exponent(const ModelParams& m) { return 2.0 / (m.p - 1.0) - (m.N - 1) / 2.0; }

inline void validate(const ModelParams& m) {
  if (!std::isfinite(m.p) || !(m.p > 1.0)) throw ConfigError("model.p must be > 1");
  if (!std::isfinite(m.a)) throw ConfigError("model.a must be finite");
  if (m.N < 1) throw ConfigError("model.N must be a positive integer");
  if (m.N >= 2 && !(m.p < conformal_exponent(m.N)))
    throw ConfigError("model.p must be below the conformal exponent 1+4/(N-1)");
  if (!(weight_exponent(m) > 0.0)) throw ConfigError("weight exponent alpha must be > 0");
}

inline double kappa_a(const ModelParams& m) {
  const double base = std::pow(2.0, 1.0 - 2.0 * m.a) * (m.p + 1.0) / std::pow(m.p - 1.0, 2.0 - m.a);
  return std::pow(base, 1.0 / (m.p - 1.0));
}

struct DerivedConstants {
  double alpha = 0.0;
  double kappa_a = 0.0;
  double p_c = 0.0;
  double theta = 100.0;
  double m0 = 10.0;

  static DerivedConstants make(const ModelParams& m, double theta = 100.0, double m0 = 10.0) {
    validate(m);
    if (!(theta > 0.0)) throw ConfigError("model.theta must be > 0");
    if (!(m0 > 0.0)) throw ConfigError("model.m0 must be > 0");
    return {weight_exponent(m), blowup::kappa_a(m), conformal_exponent(m.N), theta, m0};
  }
};

/// log(2 + u^2) without overflow in u^2.
inline double log2pu2(double u) {
  const double au = std::fabs(u);
  if (au > 1e150) return 2.0 * std::log(au) + std::log1p(2.0 / au / au);
  return std::log(2.0 + au * au);
}

/// u^2/(2+u^2) and 2/(2+u^2) without overflow.
inline double frac_u2(double u) {
  const double au = std::fabs(u);
  if (au > 1e150) return 1.0;
  return au * au / (2.0 + au * au);
}
inline double frac_2(double u) {
  const double au = std::fabs(u);
  if (au > 1e150) return 2.0 / au / au;
  return 2.0 / (2.0 + au * au);
}

inline double eval_f(double u, const ModelParams& m) {
  const double au = std::fabs(u);
  double mag = std::pow(au, m.p);
  if (m.a != 0.0 && au > 0.0) mag *= std::pow(log2pu2(au), m.a);
  if (!std::isfinite(mag)) throw RangeError("f(u) overflows double range");
  return u < 0.0 ? -mag : mag;
}

inline double eval_df(double u, const ModelParams& m) {
  const double au = std::fabs(u);
  if (m.a == 0.0) {
    const double v = m.p * std::pow(au, m.p - 1.0);
    if (!std::isfinite(v)) throw RangeError("f'(u) overflows double range");
    return v;
  }
  const double L = log2pu2(au);
  const double v = std::pow(au, m.p - 1.0) * std::pow(L, m.a - 1.0) * (m.p * L + 2.0 * m.a * frac_u2(au));
  if (!std::isfinite(v)) throw RangeError("f'(u) overflows double range");
  return v;
}

inline double eval_F1(double u, const ModelParams& m) {
  if (m.a == 0.0) return 0.0;
  const double au = std::fabs(u);
  const double v = -2.0 * m.a / ((m.p + 1.0) * (m.p + 1.0)) * std::pow(au, m.p + 1.0) *
                   std::pow(log2pu2(au), m.a - 1.0);
  if (!std::isfinite(v)) throw RangeError("F1(u) overflows double range");
  return v;
}

/// Closed-form F2'(u) for u >= 0.
inline double F2_derivative(double u, const ModelParams& m) {
  if (u == 0.0) return 0.0;
  const double L = log2pu2(u);
  const double up = std::pow(u, m.p);
  const double k = m.p + 1.0;
  return 2.0 * m.a / k * up * std::pow(L, m.a - 1.0) * frac_2(u) +
         4.0 * m.a * (m.a - 1.0) / (k * k) * up * std::pow(L, m.a - 2.0) * frac_u2(u);
}

/// psi as a function of tau = T - t, without the cancellation in T - t.
inline double psi_tau(double tau, const ModelParams& m) {
  if (!(tau > 0.0) || !(tau < 1.0)) throw DomainError("psi_T requires 0 < T - t < 1");
  return std::pow(tau, -2.0 / (m.p - 1.0)) * std::pow(-std::log(tau), -m.a / (m.p - 1.0));
}

/// psi_T(t) = tau^{-2/(p-1)} (-log tau)^{-a/(p-1)}, tau = T - t in (0, 1).
inline double psi_T(double t, double T, const ModelParams& m) {
  return psi_tau(T - t, m);
}

/// d/dt psi_T(t).
inline double psi_T_dot(double t, double T, const ModelParams& m) {
  const double tau = T - t;
  const double psi = psi_T(t, T, m);
  return psi * (2.0 / (m.p - 1.0) - m.a / (m.p - 1.0) / (-std::log(tau))) / tau;
}

inline double log_phi_s(double s, const ModelParams& m) {
  if (!(s > 0.0)) throw DomainError("phi_s requires s > 0");
  return (2.0 * s - m.a * std::log(s)) / (m.p - 1.0);
}

inline double phi_s(double s, const ModelParams& m) { return std::exp(log_phi_s(s, m)); }

inline double gamma_s(double s, const ModelParams& m) {
  if (!(s > 0.0)) throw DomainError("gamma_s requires s > 0");
  const double q = (m.p - 1.0) * (m.p - 1.0);
  return m.a * (m.p + 5.0) / (q * s) - m.a * (m.p + m.a - 1.0) / (q * s * s);
}

/// Coefficient of w that the change of variables actually produces:
/// a(p+3)/((p-1)^2 s) - a(p+a-1)/((p-1)^2 s^2). Differs from gamma_s in the 1/s term.
inline double gamma_s_exact(double s, const ModelParams& m) {
  if (!(s > 0.0)) throw DomainError("gamma_s requires s > 0");
  const double q = (m.p - 1.0) * (m.p - 1.0);
  return m.a * (m.p + 3.0) / (q * s) - m.a * (m.p + m.a - 1.0) / (q * s * s);
}

/// log(2 + phi^2 w^2) from log phi, stable for huge phi.
inline double similarity_log(double log_phi, double w) {
  if (w == 0.0) return std::log(2.0);
  const double q = 2.0 * log_phi + 2.0 * std::log(std::fabs(w));
  if (q > 0.0) return q + std::log1p(2.0 * std::exp(-q));
  return std::log(2.0 + std::exp(q));
}

/// Nonlinearity of fixed (p, a) with F and F2 memoized. Immutable after construction.
class Nonlinearity {
 public:
  Nonlinearity(const ModelParams& m, double rel_tol = 1e-10) : m_(m), rel_tol_(rel_tol) {
    if (m_.a != 0.0) {
      const ModelParams mm = m_;
      F_ = MemoizedAntiderivative(
          [mm](double v) { return std::pow(v, mm.p) * std::pow(log2pu2(v), mm.a); }, rel_tol);
      F2_ = MemoizedAntiderivative([mm](double v) { return F2_derivative(v, mm); }, rel_tol);
    }
  }

  const ModelParams& params() const { return m_; }
  double rel_tol() const { return rel_tol_; }

  double f(double u) const { return eval_f(u, m_); }
  double df(double u) const { return eval_df(u, m_); }
  double F1(double u) const { return eval_F1(u, m_); }

  double F(double u) const {
    const double au = std::fabs(u);
    if (m_.a == 0.0) {
      const double v = std::pow(au, m_.p + 1.0) / (m_.p + 1.0);
      if (!std::isfinite(v)) throw RangeError("F(u) overflows double range");
      return v;
    }
    return F_(au);
  }

  /// Largest |u| with F(u) representable.
  double F_limit() const {
    if (m_.a == 0.0) return std::pow(0.25 * std::numeric_limits<double>::max(), 1.0 / (m_.p + 1.0));
    return 0.5 * F_.max_argument();
  }

  double F2(double u) const {
    if (m_.a == 0.0) return 0.0;
    return F2_(std::fabs(u));
  }

  /// e^{-2ps/(p-1)} s^{a/(p-1)} f(phi(s) w) = s^{-a} |w|^{p-1} w log^a(2+phi^2 w^2).
  double scaled_source(double s, double log_phi, double w) const {
    if (w == 0.0) return 0.0;
    double mag = std::pow(std::fabs(w), m_.p);
    if (m_.a != 0.0) mag *= std::pow(similarity_log(log_phi, w) / s, m_.a);
    return w < 0.0 ? -mag : mag;
  }

  /// d/dw of scaled_source.
  double scaled_source_dw(double s, double log_phi, double w) const {
    const double aw = std::fabs(w);
    if (aw == 0.0) return 0.0;
    const double pw = std::pow(aw, m_.p - 1.0);
    if (m_.a == 0.0) return m_.p * pw;
    const double L = similarity_log(log_phi, w);
    const double frac = 1.0 - 2.0 / std::exp(L);  // phi^2 w^2 / (2 + phi^2 w^2)
    return pw * std::pow(L, m_.a - 1.0) * std::pow(s, -m_.a) * (m_.p * L + 2.0 * m_.a * frac);
  }

  /// s^{-a} |w|^{p+1} log^a(2+phi^2 w^2).
  double scaled_lp1_log(double s, double log_phi, double w) const {
    if (w == 0.0) return 0.0;
    double mag = std::pow(std::fabs(w), m_.p + 1.0);
    if (m_.a != 0.0) mag *= std::pow(similarity_log(log_phi, w) / s, m_.a);
    return mag;
  }

  /// e^{-2(p+1)s/(p-1)} s^{2a/(p-1)} F(phi(s) w).
  double scaled_potential(double s, double log_phi, double w) const {
    if (w == 0.0) return 0.0;
    const double aw = std::fabs(w);
    if (m_.a == 0.0) return std::pow(aw, m_.p + 1.0) / (m_.p + 1.0);
    const double log_X = log_phi + std::log(aw);
    if (log_X < std::log(F_.max_argument()) - 1.0) {
      const double Fx = F_(std::exp(log_X));
      if (Fx > 0.0 && std::isfinite(Fx))
        return std::exp(std::log(Fx) - (m_.p + 1.0) * log_phi - m_.a * std::log(s));
    }
    return std::pow(s, -m_.a) * integral_from_zero(
        [&](double z) {
          return z == 0.0 ? 0.0 : std::pow(z, m_.p) * std::pow(similarity_log(log_phi, z), m_.a);
        },
        aw, rel_tol_);
  }

  /// e^{-2(p+1)s/(p-1)} s^{2a/(p-1)} F1(phi(s) w).
  double scaled_F1(double s, double log_phi, double w) const {
    if (m_.a == 0.0 || w == 0.0) return 0.0;
    const double k = m_.p + 1.0;
    return -2.0 * m_.a / (k * k) * std::pow(s, -m_.a) * std::pow(std::fabs(w), k) *
           std::pow(similarity_log(log_phi, w), m_.a - 1.0);
  }

  /// e^{-2(p+1)s/(p-1)} s^{2a/(p-1)} F2(phi(s) w).
  double scaled_F2(double s, double log_phi, double w) const {
    if (m_.a == 0.0 || w == 0.0) return 0.0;
    const double aw = std::fabs(w);
    const double log_X = log_phi + std::log(aw);
    if (log_X < std::log(F2_.max_argument()) - 1.0) {
      const double v = F2_(std::exp(log_X));
      if (v == 0.0) return 0.0;
      const double mag = std::exp(std::log(std::fabs(v)) - (m_.p + 1.0) * log_phi - m_.a * std::log(s));
      return v < 0.0 ? -mag : mag;
    }
    const double k = m_.p + 1.0;
    return std::pow(s, -m_.a) * integral_from_zero(
        [&](double z) {
          if (z == 0.0) return 0.0;
          const double L = similarity_log(log_phi, z);
          const double frac2 = 2.0 / std::exp(L);
          return std::pow(z, m_.p) * (2.0 * m_.a / k * std::pow(L, m_.a - 1.0) * frac2 +
                                      4.0 * m_.a * (m_.a - 1.0) / (k * k) * std::pow(L, m_.a - 2.0) * (1.0 - frac2));
        },
        aw, rel_tol_);
  }

 private:
  ModelParams m_;
  double rel_tol_;
  MemoizedAntiderivative F_;
  MemoizedAntiderivative F2_;
};

/// Shared instance per (p, a, rel_tol). Creation is serialized; returned objects are immutable.
inline const Nonlinearity& nonlinearity(const ModelParams& m, double rel_tol = 1e-10) {
  static std::mutex mutex;
  static std::map<std::tuple<double, double, double>, std::unique_ptr<Nonlinearity>> cache;
  const std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[{m.p, m.a, rel_tol}];
  if (!slot) slot = std::make_unique<Nonlinearity>(ModelParams{m.p, m.a, 1}, rel_tol);
  return *slot;
}

inline double eval_F(double u, const ModelParams& m, double rel_tol = 1e-10) {
  return nonlinearity(m, rel_tol).F(u);
}

inline double eval_F2(double u, const ModelParams& m, double rel_tol = 1e-10) {
  return nonlinearity(m, rel_tol).F2(u);
}

}  // namespace blowup
