#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "blowup/antiderivative.hpp"
#include "blowup/errors.hpp"
#include "blowup/model.hpp"

namespace blowup {

/// How the backward integration is started at tau = eps_init.
///   ZeroEnergy: v on the branch v'^2/2 = F(v) (the solution with v(T) = inf),
///               v' re-projected onto that branch after every step.
///   Asymptotic: v = kappa psi, v' = d/dt (kappa psi), no projection.
enum class OdeSeed { ZeroEnergy, Asymptotic };

struct OdeOptions {
  double rel_tol = 1e-10;
  double quad_rel_tol = 1e-10;
  OdeSeed seed = OdeSeed::ZeroEnergy;
  std::size_t max_steps = 2000000;
};

struct OdeSample {
  double t = 0.0;
  double tau = 0.0;  // T - t, carried exactly
  double v = 0.0;
  double v_dot = 0.0;
};

struct OdeTrajectory {
  std::vector<OdeSample> samples;  // increasing t
  double T = 1.0;
  ModelParams params;
  bool complete = true;
  std::string message;

  /// Cubic Hermite value of v at tau, inside the sampled range.
  double v_at_tau(double tau) const {
    if (samples.size() < 2) throw DomainError("trajectory too short to interpolate");
    // samples have decreasing tau
    if (tau > samples.front().tau || tau < samples.back().tau) throw DomainError("tau outside trajectory");
    auto it = std::lower_bound(samples.begin(), samples.end(), tau,
                               [](const OdeSample& s, double x) { return s.tau > x; });
    if (it == samples.begin()) return samples.front().v;
    const OdeSample& hi = *(it - 1);  // larger tau
    const OdeSample& lo = *it;
    const double h = hi.tau - lo.tau;
    const double x = (tau - lo.tau) / h;
    // dv/dtau = -v_dot
    const double h00 = (1 + 2 * x) * (1 - x) * (1 - x), h10 = x * (1 - x) * (1 - x);
    const double h01 = x * x * (3 - 2 * x), h11 = x * x * (x - 1);
    return h00 * lo.v + h10 * h * (-lo.v_dot) + h01 * hi.v + h11 * h * (-hi.v_dot);
  }
};

/// G(v) = int_v^inf dw / sqrt(2 F(w)), the time left to blow-up on the zero-energy branch.
inline double zero_energy_time(double v, const Nonlinearity& nl) {
  const ModelParams& m = nl.params();
  if (!(v > 0.0)) throw DomainError("zero-energy time needs v > 0");
  const double k = 2.0 / (m.p - 1.0);
  const double top = nl.F_limit();
  if (!(v < top)) throw RangeError("zero-energy seed beyond F range");
  const double x_max = std::log(top / v) / k;
  // w = v e^{k x}: dw = k w dx; the integrand decays like e^{-x}
  return adaptive_integral(
      [&](double x) {
        const double w = v * std::exp(k * x);
        return k * w / std::sqrt(2.0 * nl.F(w));
      },
      0.0, x_max, 1e-13, 30);
}

/// v0 with G(v0) = eps, by Newton in log v started at kappa psi(eps).
inline double zero_energy_seed(double eps, const ModelParams& m, double quad_rel_tol = 1e-10) {
  const auto& nl = nonlinearity(m, quad_rel_tol);
  double lv = std::log(kappa_a(m) * psi_tau(eps, m));
  for (int it = 0; it < 100; ++it) {
    const double v = std::exp(lv);
    const double G = zero_energy_time(v, nl);
    const double slope = -v / (std::sqrt(2.0 * nl.F(v)) * G);  // d log G / d log v
    const double step = (std::log(G) - std::log(eps)) / slope;
    lv -= std::clamp(step, -2.0, 2.0);
    if (std::fabs(step) < 1e-14) return std::exp(lv);
  }
  throw ConvergenceError("zero-energy seed Newton iteration", std::fabs(std::log(zero_energy_time(std::exp(lv), nl) / eps)));
}

/// Backward integration of v'' = f(v) from t = T - eps_init down to t_start.
inline OdeTrajectory solve_profile(const ModelParams& m, double T, double t_start, double eps_init,
                                   const OdeOptions& opt = {}) {
  validate(m);
  if (!(eps_init > 0.0) || !(eps_init < 1.0)) throw DomainError("eps_init must lie in (0, 1)");
  if (!(t_start < T - eps_init)) throw DomainError("t_start must be < T - eps_init");
  const auto& nl = nonlinearity(m, opt.quad_rel_tol);

  using State = std::array<double, 2>;  // v, v_dot as functions of tau
  State x{};
  if (opt.seed == OdeSeed::ZeroEnergy) {
    x[0] = zero_energy_seed(eps_init, m, opt.quad_rel_tol);
    x[1] = std::sqrt(2.0 * nl.F(x[0]));
  } else {
    x[0] = kappa_a(m) * psi_tau(eps_init, m);
    x[1] = kappa_a(m) * psi_tau(eps_init, m) *
           (2.0 / (m.p - 1.0) - m.a / (m.p - 1.0) / (-std::log(eps_init))) / eps_init;
  }

  auto rhs = [&](const State& y, State& dy, double) {
    dy[0] = -y[1];
    dy[1] = -nl.f(y[0]);
  };
  namespace odeint = boost::numeric::odeint;
  auto stepper = odeint::make_controlled(0.0, opt.rel_tol, odeint::runge_kutta_dopri5<State>());

  OdeTrajectory traj;
  traj.T = T;
  traj.params = m;
  std::vector<OdeSample> rev;
  const double tau_end = T - t_start;
  double tau = eps_init;
  double dtau = 1e-3 * eps_init;
  rev.push_back({T - tau, tau, x[0], x[1]});
  std::size_t steps = 0;
  while (tau < tau_end) {
    if (++steps > opt.max_steps) {
      traj.complete = false;
      traj.message = "step limit reached";
      break;
    }
    dtau = std::min(dtau, tau_end - tau);
    if (dtau < 1e-14 * tau) {
      traj.complete = false;
      traj.message = "step size underflow at tau=" + std::to_string(tau);
      break;
    }
    const double last = tau_end - tau;
    const bool final_step = dtau == last;
    if (stepper.try_step(rhs, x, tau, dtau) == odeint::fail) continue;
    if (final_step) tau = tau_end;
    if (opt.seed == OdeSeed::ZeroEnergy) x[1] = std::sqrt(2.0 * nl.F(x[0]));
    if (!std::isfinite(x[0]) || !std::isfinite(x[1])) {
      traj.complete = false;
      traj.message = "non-finite state";
      break;
    }
    rev.push_back({T - tau, tau, x[0], x[1]});
  }
  traj.samples.assign(rev.rbegin(), rev.rend());
  return traj;
}

/// (t, v / (kappa_a psi_T)) on the part of the trajectory with T - t < 1.
inline std::vector<std::pair<double, double>> profile_ratio(const OdeTrajectory& traj) {
  std::vector<std::pair<double, double>> out;
  const double k = kappa_a(traj.params);
  for (const auto& s : traj.samples)
    if (s.tau < 1.0) out.emplace_back(s.t, s.v / (k * psi_tau(s.tau, traj.params)));
  return out;
}

}  // namespace blowup
