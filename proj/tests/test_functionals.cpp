#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <numbers>
#include <random>

#include "blowup/functionals.hpp"
#include "oracles.hpp"

using namespace blowup;

namespace {

ModelParams params(double p, double a, int N = 1) {
  ModelParams m;
  m.p = p;
  m.a = a;
  m.N = N;
  return m;
}

Geometry geometry_of(const ModelParams& m) { return m.N == 1 ? Geometry::Line : Geometry::Radial; }

std::shared_ptr<const SimilarityGrid> grid(const ModelParams& m, std::size_t n) {
  return std::make_shared<const SimilarityGrid>(make_similarity_grid(geometry_of(m), m, n));
}

std::vector<double> nodal(const SimilarityGrid& g, double (*fn)(double)) {
  std::vector<double> v(g.n);
  for (std::size_t i = 0; i < g.n; ++i) v[i] = fn(g.y[i]);
  return v;
}

SimilarityState constant_state(std::shared_ptr<const SimilarityGrid> g, double s, double w) {
  SimilarityState st;
  st.grid = g;
  st.s = s;
  st.w.assign(g->n, w);
  st.w_s.assign(g->n, 0.0);
  return st;
}

}  // namespace

TEST(WeightedIntegral, ClosedForms) {
  const auto g3 = make_similarity_grid(Geometry::Line, params(3, 0), 64);
  const std::vector<double> one(64, 1.0);
  EXPECT_NEAR(weighted_integral(g3, one, WeightMode::Rho), 4.0 / 3.0, 1e-10);
  EXPECT_NEAR(weighted_integral(g3, one, WeightMode::RhoOver1my2), 2.0, 1e-10);
  EXPECT_NEAR(weighted_integral(g3, one, WeightMode::Rho1my2), 16.0 / 15.0, 1e-10);
  const auto g2 = make_similarity_grid(Geometry::Line, params(2, 0), 64);
  EXPECT_NEAR(weighted_integral(g2, one, WeightMode::Rho), 16.0 / 15.0, 1e-10);
  // p = 2: alpha = 2, int (1-y^2) = 4/3
  EXPECT_NEAR(weighted_integral(g2, one, WeightMode::RhoOver1my2), 4.0 / 3.0, 1e-10);
}

TEST(WeightedIntegral, SmallAlphaRadial) {
  // N = 2, p = 4.5: alpha = 4/7 - 1/2 = 1/14, rho/(1-r^2) has exponent -13/14
  const auto m = params(4.5, 0, 2);
  const auto g = make_similarity_grid(Geometry::Radial, m, 64);
  const std::vector<double> one(64, 1.0);
  const double alpha = 1.0 / 14.0;
  EXPECT_NEAR(g.alpha, alpha, 1e-15);
  // 2 pi int_0^1 (1-r^2)^q r dr = pi / (q + 1)
  EXPECT_NEAR(weighted_integral(g, one, WeightMode::Rho), std::numbers::pi / (alpha + 1.0), 1e-10);
  EXPECT_NEAR(weighted_integral(g, one, WeightMode::RhoOver1my2), std::numbers::pi / alpha, 1e-9);
  EXPECT_NEAR(weighted_integral(g, one, WeightMode::Rho1my2), std::numbers::pi / (alpha + 2.0), 1e-10);
}

TEST(WeightedIntegral, Errors) {
  auto g = make_similarity_grid(Geometry::Line, params(3, 0), 16);
  EXPECT_THROW(weighted_integral(g, std::vector<double>(15, 1.0), WeightMode::Rho), DomainError);
  std::vector<double> bad(16, 1.0);
  bad[3] = std::nan("");
  EXPECT_THROW(weighted_integral(g, bad, WeightMode::Rho), DomainError);
  g.alpha = 0.0;
  EXPECT_THROW(weighted_integral(g, std::vector<double>(16, 1.0), WeightMode::Rho), ConfigError);
}

TEST(WeightedIntegral, SecondOrderOnSmoothIntegrands) {
  struct Case {
    ModelParams m;
    WeightMode mode;
    std::function<double(double)> weight;  // integrand weight including the measure
    double lo;
  };
  const double pi = std::numbers::pi;
  const std::vector<Case> cases = {
      {params(3, 0), WeightMode::Rho, [](double y) { return 1 - y * y; }, -1.0},
      {params(3, 0), WeightMode::RhoOver1my2, [](double) { return 1.0; }, -1.0},
      {params(2, 0), WeightMode::Rho1my2, [](double y) { return std::pow(1 - y * y, 3); }, -1.0},
      {params(2, 0, 3), WeightMode::Rho, [pi](double r) { return 4 * pi * r * r * (1 - r * r); }, 0.0},
  };
  for (const auto& c : cases) {
    const double exact = oracle::simpson_richardson([&](double y) { return std::cos(y) * c.weight(y); }, c.lo, 1.0, 4000);
    double prev = 0.0;
    for (std::size_t n : {16, 32, 64, 128}) {
      const auto g = make_similarity_grid(geometry_of(c.m), c.m, n);
      const double err = std::fabs(weighted_integral(g, nodal(g, [](double y) { return std::cos(y); }), c.mode) - exact);
      if (prev > 0.0 && err > 1e-13) EXPECT_GT(prev / err, 3.5) << "n = " << n;
      prev = err;
    }
  }
}

TEST(Snapshot, ZeroState) {
  const auto m = params(3, 1);
  const auto c = DerivedConstants::make(m);
  for (double s : {1.0, 4.0, 16.0}) {
    const auto sn = compute_snapshot(constant_state(grid(m, 32), s, 0.0), c);
    EXPECT_EQ(sn.E, 0.0);
    EXPECT_EQ(sn.J, 0.0);
    EXPECT_EQ(sn.L0, 0.0);
    EXPECT_EQ(sn.H_m0, 0.0);
    EXPECT_EQ(sn.D, 0.0);
    EXPECT_EQ(sn.h1_norm, 0.0);
    EXPECT_DOUBLE_EQ(sn.L, 100.0 * std::pow(s, -0.75));
  }
}

TEST(Snapshot, KappaZeroEnergy) {
  // E = kappa0^2/(p-1) int rho = 4/3 for p = 3, N = 1
  const auto m = params(3, 0);
  const auto c = DerivedConstants::make(m);
  const double k0 = std::sqrt(2.0);
  for (double s : {1.0, 5.0, 50.0}) {
    const auto sn = compute_snapshot(constant_state(grid(m, 64), s, k0), c);
    EXPECT_NEAR(sn.E, 4.0 / 3.0, 1e-8);
    EXPECT_EQ(sn.J, 0.0);
    EXPECT_EQ(sn.L0, sn.E);
    EXPECT_NEAR(sn.L, std::exp(6.0 / std::sqrt(s)) * 4.0 / 3.0 + 100.0 * std::pow(s, -0.75), 1e-8 * sn.L);
    EXPECT_NEAR(sn.l2_norm, 2.0, 1e-12);
    EXPECT_NEAR(sn.h1_norm, 2.0, 1e-12);
    EXPECT_NEAR(sn.lp1_log_norm, 4.0 * 4.0 / 3.0, 1e-10);
  }
}

TEST(Snapshot, AlgebraicTiesAndSigns) {
  std::mt19937 rng(12345);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (const auto& m : {params(3, 1), params(3, 1, 2), params(2, -1, 3)}) {
    const auto c = DerivedConstants::make(m, 37.0, 4.0);
    const auto g = grid(m, 48);
    for (int trial = 0; trial < 5; ++trial) {
      SimilarityState st;
      st.grid = g;
      st.s = 2.0 + 3.0 * trial;
      st.w.resize(g->n);
      st.w_s.resize(g->n);
      for (std::size_t i = 0; i < g->n; ++i) {
        st.w[i] = kappa_a(m) * (1.0 + 0.3 * U(rng));
        st.w_s[i] = 0.5 * U(rng);
      }
      const auto sn = compute_snapshot(st, c);
      const double s = st.s;
      EXPECT_NEAR(sn.L0, sn.E + sn.J / std::sqrt(s), 1e-13 * (1 + std::fabs(sn.E)));
      EXPECT_NEAR(sn.H_m0, sn.E + c.m0 * sn.J, 1e-13 * (1 + std::fabs(sn.E)));
      EXPECT_EQ(sn.L, std::exp((m.p + 3.0) / std::sqrt(s)) * sn.L0 + c.theta * std::pow(s, -0.75));
      EXPECT_GT(sn.D, 0.0);
      EXPECT_GE(sn.h1_norm, sn.l2_norm);
      EXPECT_GT(sn.l2_norm, 0.0);
    }
  }
}

TEST(Snapshot, RequiresSAtLeastOne) {
  const auto m = params(3, 1);
  EXPECT_THROW(compute_snapshot(constant_state(grid(m, 16), 0.9, 1.0), DerivedConstants::make(m)), DomainError);
}

TEST(EnergyIdentity, ResidualConvergesSecondOrder) {
  // smooth bounded start; |E(s1) - E(s0) - int rhs| falls ~4x per halving
  for (const auto& m : {params(3, 1), params(3, 1, 2)}) {
    const auto c = DerivedConstants::make(m);
    double prev = 0.0;
    for (std::size_t n : {32, 64}) {
      auto st = perturbed_kappa_state(grid(m, n), 5.0, 0.0);
      for (std::size_t i = 0; i < n; ++i) st.w_s[i] = 0.02 * std::cos(0.5 * std::numbers::pi * st.grid->y[i]);
      SimilarityRunOptions o;
      o.s_end = 7.0;
      const auto run = run_similarity(st, c, o);
      ASSERT_FALSE(run.blew_up);
      const auto v = lyapunov_verdict(run, c, st.grid->h);
      if (prev > 0.0) EXPECT_GT(prev / v.identity_residual, 3.0);
      prev = v.identity_residual;
    }
  }
}

TEST(Lyapunov, StationaryKappaZero) {
  const auto m = params(3, 0);
  const auto c = DerivedConstants::make(m);
  SimilarityRunOptions o;
  o.s_end = 10.0;
  const auto g = grid(m, 64);
  const auto run = run_similarity(constant_state(g, 5.0, std::sqrt(2.0)), c, o);
  ASSERT_EQ(run.snapshots.size(), 6u);
  for (const auto& sn : run.snapshots) EXPECT_NEAR(sn.E, run.snapshots.front().E, 1e-8);
  const auto v = lyapunov_verdict(run, c, g->h);
  EXPECT_TRUE(v.overall_pass);
  for (std::size_t k = 0; k < v.intervals.size(); ++k) {
    EXPECT_LT(v.intervals[k].defect, 0.0);
    EXPECT_NEAR(run.intervals[k].D_integral, 0.0, 1e-20);
  }
  EXPECT_EQ(v.first_pass_from, 5.0);
  EXPECT_EQ(v.theta, 100.0);
  EXPECT_EQ(v.m0, 10.0);
}

TEST(Lyapunov, ZeroStateDefectIsThetaDifference) {
  const auto m = params(3, 1);
  const auto c = DerivedConstants::make(m);
  SimilarityRunOptions o;
  o.s_end = 8.0;
  const auto g = grid(m, 32);
  const auto run = run_similarity(constant_state(g, 3.0, 0.0), c, o);
  const auto v = lyapunov_verdict(run, c, g->h);
  EXPECT_TRUE(v.overall_pass);
  ASSERT_EQ(v.intervals.size(), 5u);
  for (const auto& iv : v.intervals) {
    EXPECT_DOUBLE_EQ(iv.defect, 100.0 * (std::pow(iv.s + 1.0, -0.75) - std::pow(iv.s, -0.75)));
    EXPECT_LT(iv.defect, 0.0);
  }
}

TEST(Lyapunov, ThetaOverrideShiftsDefects) {
  const auto m = params(3, 1);
  const auto c = DerivedConstants::make(m);
  SimilarityRunOptions o;
  o.s_end = 8.0;
  const auto g = grid(m, 32);
  const auto run = run_similarity(perturbed_kappa_state(g, 5.0, 0.0, 0.0), c, o);
  const auto base = lyapunov_verdict(run, c, g->h);
  for (double theta : {1.0, 10.0, 1000.0}) {
    const auto v = lyapunov_verdict(run, c, g->h, 10.0, theta);
    EXPECT_EQ(v.theta, theta);
    for (std::size_t k = 0; k < v.intervals.size(); ++k) {
      const double s = v.intervals[k].s;
      const double shift = (theta - 100.0) * (std::pow(s + 1.0, -0.75) - std::pow(s, -0.75));
      EXPECT_NEAR(v.intervals[k].defect - base.intervals[k].defect, shift, 1e-10 * (1 + std::fabs(theta)));
    }
  }
}

TEST(Lyapunov, PerturbedKappaRefinement) {
  // reduced span of the acceptance case (3, 1, 1)
  const auto m = params(3, 1);
  const auto c = DerivedConstants::make(m);
  double prev = 0.0;
  for (std::size_t n : {32, 64}) {
    const auto g = grid(m, n);
    const double ds = max_similarity_ds(*g);
    const auto shot = shoot_perturbed_kappa(g, 5.0, 12.0, 0.1, ds);
    ASSERT_TRUE(shot.bounded);
    SimilarityRunOptions o;
    o.s_end = 12.0;
    const auto run = run_similarity(perturbed_kappa_state(g, 5.0, 0.1, shot.shift), c, o);
    ASSERT_FALSE(run.blew_up);
    const auto v = lyapunov_verdict(run, c, g->h);
    EXPECT_TRUE(v.overall_pass) << "n = " << n << " max defect " << v.max_defect;
    for (std::size_t k = 0; k < run.intervals.size(); ++k) EXPECT_GE(run.intervals[k].D_integral, 0.0);
    if (prev > 0.0) EXPECT_GT(prev / v.identity_residual, 3.0);
    prev = v.identity_residual;
  }
}

TEST(Lyapunov, BlowupRecorded) {
  const auto m = params(3, 1);
  const auto c = DerivedConstants::make(m);
  SimilarityRunOptions o;
  o.s_end = 30.0;
  const auto run = run_similarity(constant_state(grid(m, 16), 2.0, 5.0 * kappa_a(m)), c, o);
  EXPECT_TRUE(run.blew_up);
  EXPECT_FALSE(run.message.empty());
}

TEST(Lyapunov, RunOptionErrors) {
  const auto m = params(3, 1);
  const auto c = DerivedConstants::make(m);
  const auto st = constant_state(grid(m, 16), 5.0, 0.0);
  SimilarityRunOptions o;
  o.s_end = 4.0;
  EXPECT_THROW(run_similarity(st, c, o), ConfigError);
  o.s_end = 6.0;
  o.ds_factor = 1.5;
  EXPECT_THROW(run_similarity(st, c, o), ConfigError);
}

TEST(H1Growth, StationaryZeroSlope) {
  std::vector<FunctionalSnapshot> snaps;
  for (int k = 0; k < 16; ++k) {
    FunctionalSnapshot sn;
    sn.s = 5.0 + k;
    sn.h1_norm = 2.0;
    snaps.push_back(sn);
  }
  const auto r = h1_growth_monitor(snaps);
  EXPECT_FALSE(r.degenerate);
  EXPECT_NEAR(r.slope, 0.0, 1e-14);
  EXPECT_NEAR(r.slope_first_half, 0.0, 1e-14);
}

TEST(H1Growth, PowerLawRecovered) {
  std::vector<FunctionalSnapshot> snaps;
  for (int k = 0; k < 16; ++k) {
    FunctionalSnapshot sn;
    sn.s = 5.0 + k;
    sn.h1_norm = 3.0 * std::pow(sn.s, 0.4);
    snaps.push_back(sn);
  }
  const auto r = h1_growth_monitor(snaps);
  EXPECT_NEAR(r.slope, 0.4, 1e-12);
  EXPECT_NEAR(r.slope_first_half, 0.4, 1e-12);
  EXPECT_NEAR(r.slope_second_half, 0.4, 1e-12);
}

TEST(H1Growth, ZeroSolutionDegenerate) {
  std::vector<FunctionalSnapshot> snaps(12);
  for (int k = 0; k < 12; ++k) snaps[k].s = 2.0 + k;
  EXPECT_TRUE(h1_growth_monitor(snaps).degenerate);
}

TEST(H1Growth, InsufficientSpan) {
  std::vector<FunctionalSnapshot> snaps(9);
  for (int k = 0; k < 9; ++k) {
    snaps[k].s = 2.0 + 2 * k;
    snaps[k].h1_norm = 1.0;
  }
  EXPECT_THROW(h1_growth_monitor(snaps), DomainError);  // 9 snapshots
  std::vector<FunctionalSnapshot> narrow(12);
  for (int k = 0; k < 12; ++k) {
    narrow[k].s = 10.0 + k;
    narrow[k].h1_norm = 1.0;
  }
  EXPECT_THROW(h1_growth_monitor(narrow), DomainError);  // 21/10 < 4
}
