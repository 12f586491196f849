#include <gtest/gtest.h>

#include <cmath>

#include "blowup/phys_solver.hpp"
#include "oracles.hpp"

using namespace blowup;

namespace {

/// Oracle RK4 from rest at u = c, landing exactly on t_target.
double oracle_u_at(double c, double p, double a, double t_target) {
  oracle::OdeState s{0.0, c, 0.0};
  while (s.t < t_target) {
    double h = 2e-5 * std::pow(c / s.u, 0.5 * (p - 1.0));
    if (s.t + h > t_target) h = t_target - s.t;
    s = oracle::rk4_step(s, h, p, a);
  }
  return s.u;
}

PhysicalState constant_state(double c, double v = 0.0, double hw = 0.05, double dx = 1e-3) {
  return make_initial_state(make_mesh(Geometry::Line, 1, hw, dx),
                            "constant:" + std::to_string(c) + "," + std::to_string(v));
}

}  // namespace

TEST(Mesh, Layout) {
  const Mesh line = make_mesh(Geometry::Line, 1, 1.0, 0.01);
  EXPECT_EQ(line.n, 201u);
  EXPECT_DOUBLE_EQ(line.left(), -1.0);
  EXPECT_NEAR(line.right(), 1.0, 1e-12);
  const Mesh rad = make_mesh(Geometry::Radial, 3, 1.0, 0.01);
  EXPECT_EQ(rad.n, 101u);
  EXPECT_EQ(rad.x(0), 0.0);
  EXPECT_THROW(make_mesh(Geometry::Line, 2, 1.0, 0.01), ConfigError);
  EXPECT_THROW(make_mesh(Geometry::Line, 1, 1.0, 0.0), ConfigError);
}

TEST(Laplacian, RadialQuadraticExact) {
  for (int N : {1, 2, 3}) {
    const Mesh m = make_mesh(Geometry::Radial, N, 1.0, 0.05);
    std::vector<double> u(m.n), out;
    for (std::size_t i = 0; i < m.n; ++i) u[i] = m.x(i) * m.x(i);
    laplacian(m, u, out);
    for (std::size_t i = 0; i + 1 < m.n; ++i) EXPECT_NEAR(out[i], 2.0 * N, 1e-9) << N << " " << i;
  }
}

TEST(Laplacian, RadialSecondOrder) {
  // u = cos(k r), Delta u = -k^2 cos - (N-1) k sin / r
  const int N = 3;
  const double k = 2.0;
  double err_prev = 0.0;
  for (double dx : {0.02, 0.01, 0.005}) {
    const Mesh m = make_mesh(Geometry::Radial, N, 1.0, dx);
    std::vector<double> u(m.n), out;
    for (std::size_t i = 0; i < m.n; ++i) u[i] = std::cos(k * m.x(i));
    laplacian(m, u, out);
    double err = 0.0;
    for (std::size_t i = 0; i + 1 < m.n; ++i) {
      const double r = m.x(i);
      const double exact = r == 0.0 ? -N * k * k : -k * k * std::cos(k * r) - (N - 1) * k * std::sin(k * r) / r;
      err = std::max(err, std::fabs(out[i] - exact));
    }
    if (err_prev > 0.0) EXPECT_GT(err_prev / err, 3.5);
    err_prev = err;
  }
}

TEST(StepWave, ZeroStaysZero) {
  for (Scheme sc : {Scheme::RK4, Scheme::Leapfrog}) {
    auto s = make_initial_state(make_mesh(Geometry::Line, 1, 1.0, 0.01), "constant:0");
    for (int i = 0; i < 50; ++i) s = step_wave(s, {3, 1, 1}, 0.005, sc);
    EXPECT_EQ(sup_norm(s.u), 0.0);
    EXPECT_EQ(sup_norm(s.u_t), 0.0);
  }
}

TEST(StepWave, RejectsLargeDt) {
  auto s = constant_state(1.0);
  EXPECT_THROW(step_wave(s, {3, 0, 1}, 2e-3), ConfigError);
}

TEST(StepWave, NonFiniteCarriesLastState) {
  auto s = constant_state(1e60, 0.0);
  s.t = 0.25;
  try {
    step_wave(s, {3, 1, 1}, 1e-3);
    FAIL() << "expected NonFiniteState";
  } catch (const NonFiniteState& e) {
    EXPECT_EQ(e.last().t, 0.25);
    EXPECT_EQ(e.last().u[0], 1e60);
  }
}

TEST(RunToBlowup, ConstantDataMatchesOdeOracle) {
  const ModelParams m{3, 1, 1};
  const auto rec = run_to_blowup(constant_state(2.0), m, {});
  double worst = 0.0;
  for (const auto& a : rec.amp_series) {
    if (a.t == 0.0) continue;
    worst = std::max(worst, std::fabs(a.sup_norm / oracle_u_at(2.0, 3, 1, a.t) - 1.0));
  }
  EXPECT_LT(worst, 1e-6);
  EXPECT_GE(rec.amp_series.back().sup_norm, 1e5);
  const double T_oracle = oracle::blowup_time_from_rest(2.0, 3, 1);
  EXPECT_NEAR(rec.T_est, T_oracle, 1e-4) << "T_oracle=" << T_oracle;
}

TEST(RunToBlowup, ExactSolutionBlowupTime) {
  const ModelParams m{3, 0, 1};
  const double c = std::sqrt(2.0);
  const auto rec = run_to_blowup(constant_state(c, c), m, {});
  EXPECT_NEAR(rec.T_est, 1.0, 1e-4);
  EXPECT_LT(rec.T_fit_rms, 1e-6);
}

TEST(RunToBlowup, AmpSeriesIncreasing) {
  const auto rec = run_to_blowup(constant_state(2.0), {3, 1, 1}, {});
  for (std::size_t i = 1; i < rec.amp_series.size(); ++i) {
    EXPECT_GT(rec.amp_series[i].t, rec.amp_series[i - 1].t);
    EXPECT_GT(rec.amp_series[i].sup_norm, rec.amp_series[i - 1].sup_norm);
  }
  EXPECT_EQ(rec.snapshots.size(), rec.amp_series.size());
}

TEST(RunToBlowup, GaussianStableUnderRefinement) {
  const ModelParams m{3, 1, 1};
  PhysOptions o;
  o.stop_amp = 1e4;
  double T[3];
  const double dxs[3] = {0.02, 0.01, 0.005};
  for (int k = 0; k < 3; ++k) {
    const auto s0 = make_initial_state(make_mesh(Geometry::Line, 1, 1.0, dxs[k]), "gaussian:5,1");
    const auto rec = run_to_blowup(s0, m, o);
    T[k] = rec.T_est;
    EXPECT_NEAR(rec.x_star, 0.0, 1e-12);
    EXPECT_LT(rec.lipschitz_slope, 1.0);
  }
  EXPECT_LT(std::fabs(T[2] - T[1]) / T[2], 5e-4) << T[1] << " " << T[2];
  // second-order signature: successive differences shrink by >= 3
  EXPECT_GE(std::fabs(T[0] - T[1]) / std::fabs(T[1] - T[2]), 3.0) << T[0] << " " << T[1] << " " << T[2];
}

TEST(RunToBlowup, NoBlowupDetected) {
  PhysOptions o;
  o.max_steps = 100;
  o.stop_amp = 1.0;
  auto s = constant_state(0.0);
  EXPECT_THROW(run_to_blowup(s, {3, 1, 1}, o), NoBlowupError);
  o.stop_amp = 0.0;
  EXPECT_THROW(run_to_blowup(constant_state(1.0), {3, 1, 1}, o), ConfigError);
}

TEST(ConeNorms, ConstantSolutionReduction) {
  const ModelParams m{3, 1, 1};
  auto s = constant_state(50.0, 3.0, 0.5, 1e-3);
  s.t = 0.9;
  const double T = 1.0, tau = 0.1;
  const auto c = cone_norms(s, m, 0.0, T);
  const double psi = psi_tau(tau, m);
  EXPECT_NEAR(c.n0, std::sqrt(2.0) * 50.0 / psi, 1e-12);
  EXPECT_NEAR(c.n1, tau / psi * std::sqrt(2.0) * 3.0, 1e-12);
  EXPECT_NEAR(c.n2, 0.0, 1e-12);
}

TEST(ConeNorms, PartialCellsAndZero) {
  const ModelParams m{3, 1, 1};
  auto s = constant_state(0.0, 0.0, 0.5, 1e-2);
  s.t = 0.5;
  const auto z = cone_norms(s, m, 0.0137, 0.5 + 0.0733);
  EXPECT_EQ(z.n0, 0.0);
  EXPECT_EQ(z.n1, 0.0);
  EXPECT_EQ(z.n2, 0.0);
  // linear u: the piecewise-linear integral of u^2 is exact up to O(dx^2)
  for (std::size_t i = 0; i < s.mesh.n; ++i) s.u[i] = s.mesh.x(i);
  const double x0 = 0.0137, tau = 0.0733;
  const auto c = cone_norms(s, m, x0, 0.5 + tau);
  const double exact = ((x0 + tau) * (x0 + tau) * (x0 + tau) - (x0 - tau) * (x0 - tau) * (x0 - tau)) / 3.0;
  EXPECT_NEAR(c.n0 * c.n0 * psi_tau(tau, m) * psi_tau(tau, m) * tau, exact, 2e-5);
  EXPECT_NEAR(c.n2, tau / psi_tau(tau, m) * std::sqrt(2.0), 1e-10);
}

TEST(ConeNorms, RadialMeasure) {
  const ModelParams m{2, -1, 3};
  auto s = make_initial_state(make_mesh(Geometry::Radial, 3, 0.5, 1e-3), "constant:7");
  s.t = 0.8;
  const auto c = cone_norms(s, m, 0.0, 1.0);
  // |B(0, tau)| = 4 pi tau^3 / 3, divided by tau^3
  EXPECT_NEAR(c.n0, 7.0 * std::sqrt(4.0 * std::numbers::pi / 3.0) / psi_tau(0.2, m), 1e-5);
  EXPECT_THROW(cone_norms(s, m, 0.1, 1.0), DomainError);
}

TEST(ConeNorms, Errors) {
  const ModelParams m{3, 1, 1};
  auto s = constant_state(1.0, 0.0, 0.05, 1e-3);
  s.t = 0.0;
  EXPECT_THROW(cone_norms(s, m, 0.0, 0.003), ResolutionError);
  EXPECT_THROW(cone_norms(s, m, 0.0, 0.2), DomainError);
  EXPECT_THROW(cone_norms(s, m, 0.0, 0.0), DomainError);
}

TEST(ConeNorms, ExactSolutionConstantInTime) {
  const ModelParams m{3, 0, 1};
  const double c = std::sqrt(2.0);
  const auto rec = run_to_blowup(constant_state(c, c, 0.05, 1e-4), m, {});
  double lo = 1e300, hi = 0.0;
  for (const auto& snap : rec.snapshots) {
    const double tau = rec.T_est - snap.t;
    if (tau < 4e-4 || tau > 0.04) continue;
    const double n0 = cone_norms(snap, m, 0.0, rec.T_est).n0;
    lo = std::min(lo, n0);
    hi = std::max(hi, n0);
  }
  EXPECT_LT(hi / lo - 1.0, 0.01);
  EXPECT_NEAR(hi, 2.0, 0.02);  // sqrt2 * kappa_0
}

TEST(Energy, LeapfrogConservation) {
  const ModelParams m{3, 1, 1};
  auto s = make_initial_state(make_mesh(Geometry::Line, 1, 4.0, 0.01), "gaussian:0.3,0.5");
  const double e0 = discrete_energy(s, m);
  const double dt = 0.005;
  for (int i = 0; i < 200; ++i) s = step_wave(s, m, dt, Scheme::Leapfrog);
  const double e1 = discrete_energy(s, m);
  EXPECT_LT(std::fabs(e1 - e0) / std::fabs(e0), 1e-4) << e0 << " " << e1;
}

TEST(FiniteSpeed, PerturbationOutsideConeInvisibleInside) {
  const ModelParams m{3, 1, 1};
  const Mesh mesh = make_mesh(Geometry::Line, 1, 2.0, 0.01);
  auto a = make_initial_state(mesh, "gaussian:1,0.5");
  auto b = a;
  const double R = 1.0;
  for (std::size_t i = 0; i < mesh.n; ++i)
    if (std::fabs(mesh.x(i)) > R) b.u[i] += 0.3 * std::sin(7.0 * mesh.x(i));
  const int K = 40;
  for (int k = 0; k < K; ++k) {
    a = step_wave(a, m, 0.005, Scheme::Leapfrog);
    b = step_wave(b, m, 0.005, Scheme::Leapfrog);
  }
  // numerical domain of dependence grows by 2 cells per kick-drift-kick step
  const double inner = R - (2 * K + 2) * mesh.dx;
  int checked = 0;
  for (std::size_t i = 0; i < mesh.n; ++i)
    if (std::fabs(mesh.x(i)) < inner) {
      EXPECT_EQ(a.u[i], b.u[i]);
      EXPECT_EQ(a.u_t[i], b.u_t[i]);
      ++checked;
    }
  EXPECT_GT(checked, 20);
}

TEST(InitialState, Parsing) {
  const Mesh mesh = make_mesh(Geometry::Line, 1, 1.0, 0.1);
  EXPECT_DOUBLE_EQ(make_initial_state(mesh, "gaussian:5,1").u[10], 5.0);
  EXPECT_DOUBLE_EQ(make_initial_state(mesh, "constant:2,3").u_t[4], 3.0);
  EXPECT_THROW(make_initial_state(mesh, "gaussian:5"), ConfigError);
  EXPECT_THROW(make_initial_state(mesh, "wobble:1"), ConfigError);
  EXPECT_THROW(make_initial_state(mesh, "constant:x"), ConfigError);
  EXPECT_THROW(make_initial_state(mesh, "file:/nonexistent/file.csv"), ConfigError);
}

TEST(AdvanceTo, LandsExactly) {
  auto s = constant_state(1.0);
  const auto t = advance_to(s, {3, 1, 1}, 0.0123);
  EXPECT_EQ(t.t, 0.0123);
  EXPECT_NEAR(t.u[3], oracle_u_at(1.0, 3, 1, 0.0123), 1e-10);
}
