// Inversion of magnetic maps by damped Newton iteration.
//
// The maps are strongly monotone with symmetric positive definite Jacobians,
// so the Newton direction is always a descent direction for the residual
// norm and halving the step until the residual decreases converges globally
// to the unique root.
#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gradmag/core.hpp"
#include "gradmag/magnetics.hpp"

namespace gradmag {

struct NewtonOptions {
  double tol = 1e-9;
  int max_iter = 100;
  // Added to the Jacobian diagonal before each solve.
  double regularization = 1e-12;
  int max_halvings = 60;
};

struct InversionResult {
  Vec2 x;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
  // Residual norm at the start and after every accepted step.
  std::vector<double> residuals;
};

class InversionError : public std::runtime_error {
 public:
  InversionError(const std::string &what, double residual)
      : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

// Solves f(x) = target from x0, where jac(x) is the symmetric positive
// definite Jacobian of f.
inline InversionResult damped_newton(const std::function<Vec2(const Vec2 &)> &f,
                                     const std::function<Mat2(const Vec2 &)> &jac,
                                     const Vec2 &target, const Vec2 &x0,
                                     const NewtonOptions &opt = {}) {
  if (!(opt.tol > 0.0) || opt.max_iter < 0) throw std::invalid_argument("damped_newton: bad options");
  InversionResult res;
  res.x = x0;
  Vec2 r = f(res.x) - target;
  res.residual = norm(r);
  res.residuals.push_back(res.residual);
  while (res.residual > opt.tol && res.iterations < opt.max_iter) {
    const Mat2 j = jac(res.x) + opt.regularization * Mat2::identity();
    const Vec2 step = -1.0 * j.solve(r);
    double alpha = 1.0;
    bool accepted = false;
    for (int h = 0; h <= opt.max_halvings; ++h, alpha *= 0.5) {
      const Vec2 trial = res.x + alpha * step;
      const Vec2 rt = f(trial) - target;
      const double nt = norm(rt);
      if (!std::isfinite(nt)) continue;
      if (nt < res.residual) {
        res.x = trial;
        r = rt;
        res.residual = nt;
        accepted = true;
        break;
      }
    }
    if (!is_finite(res.x)) throw InversionError("damped_newton: non-finite iterate", res.residual);
    ++res.iterations;
    if (!accepted) break;  // at the rounding floor
    res.residuals.push_back(res.residual);
  }
  res.converged = res.residual <= opt.tol;
  return res;
}

// Flux linkage psi with current_map(psi, theta_m) = i_target.
inline InversionResult solve_current_map(const MagneticModel &model, const Vec2 &i_target,
                                         double theta_m, const Vec2 &psi_init,
                                         const NewtonOptions &opt = {}) {
  if (!model.provides_current_map()) {
    throw std::invalid_argument("invert_current_map: variant '" +
                                std::string(to_string(model.variant())) + "' is not a current map");
  }
  return damped_newton([&](const Vec2 &psi) { return model.current_map(psi, theta_m).primal; },
                       [&](const Vec2 &psi) { return model.incremental_inverse_inductance(psi, theta_m); },
                       i_target, psi_init, opt);
}

// Current i with flux_map(i, theta_m) = psi_target.
inline InversionResult solve_flux_map(const MagneticModel &model, const Vec2 &psi_target,
                                      double theta_m, const Vec2 &i_init,
                                      const NewtonOptions &opt = {}) {
  if (!model.provides_flux_map()) {
    throw std::invalid_argument("invert_flux_map: variant '" +
                                std::string(to_string(model.variant())) + "' is not a flux map");
  }
  return damped_newton([&](const Vec2 &i) { return model.flux_map(i, theta_m).primal; },
                       [&](const Vec2 &i) { return model.incremental_inductance(i, theta_m); },
                       psi_target, i_init, opt);
}

inline Vec2 invert_current_map(const MagneticModel &model, const Vec2 &i_target, double theta_m = 0.0,
                               const Vec2 &psi_init = {}, double tol = 1e-9, int max_iter = 100) {
  const InversionResult r =
      solve_current_map(model, i_target, theta_m, psi_init, {tol, max_iter});
  if (!r.converged) throw InversionError("invert_current_map: no convergence", r.residual);
  return r.x;
}

inline Vec2 invert_flux_map(const MagneticModel &model, const Vec2 &psi_target, double theta_m = 0.0,
                            const Vec2 &i_init = {}, double tol = 1e-9, int max_iter = 100) {
  const InversionResult r = solve_flux_map(model, psi_target, theta_m, i_init, {tol, max_iter});
  if (!r.converged) throw InversionError("invert_flux_map: no convergence", r.residual);
  return r.x;
}

}  // namespace gradmag
