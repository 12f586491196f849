#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "blowup/errors.hpp"

namespace blowup {

/// Adaptive Gauss-Kronrod integral of g over [a, b]; throws ConvergenceError
/// when the error estimate stays above rel_tol times the L1 norm.
template <class Fn>
double adaptive_integral(Fn&& g, double a, double b, double rel_tol, unsigned max_depth = 20) {
  if (a == b) return 0.0;
  using GK = boost::math::quadrature::gauss_kronrod<double, 15>;
  // Boost's error estimate has an absolute floor near 1e-9 that swamps very
  // short panels. On a panel this short relative to its distance from 0 the
  // integrands here are polynomial to many digits, so one G7K15 panel is exact.
  if (std::fabs(b - a) <= 1e-4 * std::min(std::fabs(a), std::fabs(b)) && a * b > 0.0) {
    const double value = GK::integrate(std::forward<Fn>(g), a, b, 0);
    if (!std::isfinite(value)) throw RangeError("quadrature produced a non-finite value");
    return value;
  }
  double error = 0.0;
  double l1 = 0.0;
  const double value = GK::integrate(
      std::forward<Fn>(g), a, b, max_depth, rel_tol, &error, &l1);
  if (!std::isfinite(value)) throw RangeError("quadrature produced a non-finite value");
  const double floor = 64.0 * std::numeric_limits<double>::epsilon() * l1;
  if (error > rel_tol * l1 + floor) {
    throw ConvergenceError("adaptive quadrature did not converge", l1 > 0 ? error / l1 : error);
  }
  return value;
}

/// Integral of g over [0, u] for small u > 0, as u g(u) int_0^1 g(u x) / g(u) dx.
/// Boost's error estimate on [0, u] does not scale with the integrand, so tiny
/// intervals are mapped to [0, 1]. g must be monotone near 0; if g(u) is below
/// the normal range the integral is too and 0 is returned.
template <class Fn>
double integral_from_zero(const Fn& g, double u, double rel_tol) {
  if (u == 0.0) return 0.0;
  const double gu = g(u);
  if (!(std::fabs(gu) >= std::numeric_limits<double>::min())) return 0.0;
  const double scaled = adaptive_integral([&](double x) { return g(u * x) / gu; }, 0.0, 1.0, rel_tol);
  return u * gu * scaled;
}

/// Integral from 0 to u of an integrand on [0, inf), memoized on the knots
/// 0, 2^kMinExponent, ..., 2^k. An evaluation is the cumulative table value at
/// the largest knot below |u| plus one short adaptive panel, so the result is
/// exact to the quadrature tolerance with no interpolation error.
///
/// The table is filled in the constructor and never mutated afterwards;
/// concurrent const calls are safe.
class MemoizedAntiderivative {
 public:
  static constexpr int kMinExponent = -8;

  MemoizedAntiderivative() = default;

  MemoizedAntiderivative(std::function<double(double)> integrand, double rel_tol)
      : g_(std::move(integrand)), rel_tol_(rel_tol) {
    knots_.push_back(0.0);
    cumulative_.push_back(0.0);
    double sum = 0.0;
    for (int k = kMinExponent; k < std::numeric_limits<double>::max_exponent - 1; ++k) {
      const double lo = k == kMinExponent ? 0.0 : std::ldexp(1.0, k - 1);
      const double hi = std::ldexp(1.0, k);
      double piece = 0.0;
      try {
        piece = adaptive_integral(g_, lo, hi, rel_tol_);
      } catch (const std::exception&) {
        break;
      }
      if (!std::isfinite(piece) || !std::isfinite(sum + piece)) break;
      sum += piece;
      knots_.push_back(hi);
      cumulative_.push_back(sum);
    }
  }

  /// Largest argument the table covers.
  double max_argument() const { return knots_.empty() ? 0.0 : knots_.back() * 2.0; }

  /// Integral over [0, u] for u >= 0.
  double operator()(double u) const {
    if (!(u >= 0.0)) throw DomainError("antiderivative argument must be >= 0");
    if (u == 0.0) return 0.0;
    if (u >= max_argument()) throw RangeError("antiderivative argument beyond representable range");
    int exponent = 0;
    std::frexp(u, &exponent);  // u in [2^(exponent-1), 2^exponent)
    // knots_[i] = 2^(kMinExponent + i - 1) for i >= 1
    std::size_t index = 0;
    if (exponent - 1 >= kMinExponent) {
      index = static_cast<std::size_t>(exponent - 1 - kMinExponent + 1);
      if (index >= knots_.size()) index = knots_.size() - 1;
    }
    if (index == 0) return below_first_knot(u);
    const double base = knots_[index];
    const double rest = adaptive_integral(g_, base, u, rel_tol_);
    const double value = cumulative_[index] + rest;
    if (!std::isfinite(value)) throw RangeError("antiderivative overflow");
    return value;
  }

 private:
  double below_first_knot(double u) const { return integral_from_zero(g_, u, rel_tol_); }

  std::function<double(double)> g_;
  double rel_tol_ = 1e-10;
  std::vector<double> knots_;
  std::vector<double> cumulative_;
};

}  // namespace blowup
