// Adaptive Gauss-Legendre quadrature on [a, b].
#pragma once

#include <array>
#include <cmath>
#include <numbers>

namespace gradmag {

template <int Order>
struct GaussLegendre {
  std::array<double, Order> nodes{};
  std::array<double, Order> weights{};

  GaussLegendre() {
    // Newton iteration on P_n from the Chebyshev initial guess.
    for (int i = 0; i < Order; ++i) {
      double x = std::cos(std::numbers::pi * (i + 0.75) / (Order + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= Order; ++k) {
          const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = Order * (x * p1 - p0) / (x * x - 1.0);
        const double dx = p1 / dp;
        x -= dx;
        if (std::abs(dx) < 1e-16) break;
      }
      nodes[i] = x;
      weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
  }

  static const GaussLegendre &instance() {
    static const GaussLegendre rule;
    return rule;
  }

  template <class F>
  double integrate(F &&f, double a, double b) const {
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    double sum = 0.0;
    for (int i = 0; i < Order; ++i) sum += weights[i] * f(mid + half * nodes[i]);
    return half * sum;
  }
};

namespace detail {

template <class F>
double adaptive_gauss(F &f, double a, double b, double whole, double tol, int depth) {
  const auto &rule = GaussLegendre<32>::instance();
  const double m = 0.5 * (a + b);
  const double left = rule.integrate(f, a, m);
  const double right = rule.integrate(f, m, b);
  if (depth <= 0 || std::abs(left + right - whole) <= tol) return left + right;
  return adaptive_gauss(f, a, m, left, 0.5 * tol, depth - 1) +
         adaptive_gauss(f, m, b, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

// 32-point Gauss-Legendre with interval bisection until halves agree with the
// whole to within tol.
template <class F>
double integrate_adaptive(F &&f, double a, double b, double tol = 1e-10, int max_depth = 12) {
  const double whole = GaussLegendre<32>::instance().integrate(f, a, b);
  return detail::adaptive_gauss(f, a, b, whole, tol, max_depth);
}

}  // namespace gradmag
