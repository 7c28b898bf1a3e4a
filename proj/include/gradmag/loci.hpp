// Optimal control loci of a magnetic model: maximum torque per ampere
// (MTPA), maximum torque per voltage (MTPV, i.e. per flux linkage) and the
// images of constant-current circles.
//
// Optima are located by a 1-degree angle scan followed by a bracketed search
// for the zero of the angle derivative, which stays robust near flat optima;
// torque levels are hit by bisection on the current magnitude.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "gradmag/core.hpp"
#include "gradmag/inversion.hpp"
#include "gradmag/magnetics.hpp"

namespace gradmag {

struct LocusPoint {
  Vec2 i;
  Vec2 psi;
  double tau = 0.0;
  // Current angle from the d-axis (MTPA, limit curves) or flux-linkage angle
  // (MTPV), in radians.
  double angle = 0.0;
};

struct LociOptions {
  // Angle tolerance of the optimum search (rad).
  double angle_tol = 1e-10;
  // Relative torque tolerance of the bisection on the current magnitude.
  double torque_tol = 1e-12;
  // Largest current magnitude searched for MTPA points.
  double current_limit = 4.0;
  // Rotor angles averaged over for harmonic models.
  int harmonic_samples = 24;
};

class LocusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

// Inversion to the rounding floor: torque derivatives along the loci are
// taken by differences, which amplify inversion residuals.
inline Vec2 precise_inverse(const MagneticModel &m, const Vec2 &target, double th, const Vec2 &init) {
  const NewtonOptions opt{1e-15, 100};
  const InversionResult r = m.provides_current_map() ? solve_current_map(m, target, th, init, opt)
                                                     : solve_flux_map(m, target, th, init, opt);
  if (!(r.residual <= 1e-12)) throw InversionError("loci: model inversion failed", r.residual);
  return r.x;
}

// Flux linkage and torque at a current, averaged over one angle period for
// harmonic models.
inline std::pair<Vec2, double> operating_point(const MagneticModel &m, const Vec2 &i,
                                               const LociOptions &opt, Vec2 *psi_guess = nullptr) {
  const int n = m.harmonic() ? std::max(1, opt.harmonic_samples) : 1;
  Vec2 psi{};
  double tau = 0.0;
  for (int s = 0; s < n; ++s) {
    const double th = m.harmonic() ? 2.0 * std::numbers::pi * s / (double(m.k()) * n) : 0.0;
    if (m.provides_flux_map()) {
      const MagneticOutput o = m.flux_map(i, th);
      psi = psi + o.primal;
      tau += o.torque;
    } else {
      const Vec2 init = psi_guess ? *psi_guess : Vec2{};
      const Vec2 p = precise_inverse(m, i, th, init);
      psi = psi + p;
      tau += m.current_map(p, th).torque;
    }
  }
  psi = (1.0 / n) * psi;
  if (psi_guess) *psi_guess = psi;
  return {psi, tau / n};
}

inline std::pair<Vec2, double> at_flux(const MagneticModel &m, const Vec2 &psi,
                                       const LociOptions &opt, Vec2 *i_guess = nullptr) {
  const int n = m.harmonic() ? std::max(1, opt.harmonic_samples) : 1;
  Vec2 cur{};
  double tau = 0.0;
  for (int s = 0; s < n; ++s) {
    const double th = m.harmonic() ? 2.0 * std::numbers::pi * s / (double(m.k()) * n) : 0.0;
    if (m.provides_current_map()) {
      const MagneticOutput o = m.current_map(psi, th);
      cur = cur + o.primal;
      tau += o.torque;
    } else {
      const Vec2 init = i_guess ? *i_guess : Vec2{};
      const Vec2 c = precise_inverse(m, psi, th, init);
      cur = cur + c;
      tau += m.flux_map(c, th).torque;
    }
  }
  cur = (1.0 / n) * cur;
  if (i_guess) *i_guess = cur;
  return {cur, tau / n};
}

// Maximizes f over [lo, hi]: a 1-degree scan brackets the optimum, then the
// root of the central-difference derivative is bracketed and bisected.
// Function values alone locate a smooth maximum only to about sqrt(eps);
// the derivative root is accurate to the difference noise. Maxima on the
// interval ends fall back to golden-section search on the values.
inline double maximize_angle(const std::function<double(double)> &f, double lo, double hi,
                             double tol) {
  const double step = std::numbers::pi / 180.0;
  const int n = std::max(2, int(std::ceil((hi - lo) / step)));
  double best = lo, best_val = -INFINITY;
  for (int k = 0; k <= n; ++k) {
    const double a = lo + (hi - lo) * k / n;
    const double v = f(a);
    if (v > best_val) {
      best_val = v;
      best = a;
    }
  }
  double a = std::max(lo, best - (hi - lo) / n), b = std::min(hi, best + (hi - lo) / n);
  const double h = 1e-6;
  const auto slope = [&](double x) { return (f(x + h) - f(x - h)) / (2.0 * h); };
  double sa = slope(a), sb = slope(b);
  if (sa > 0.0 && sb < 0.0) {
    while (b - a > tol) {
      const double m = 0.5 * (a + b);
      const double sm = slope(m);
      if (sm == 0.0) return m;
      (sm > 0.0 ? a : b) = m;
    }
    return 0.5 * (a + b);
  }
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace detail

// Torque and flux linkage at a current for any model direction.
inline LocusPoint point_at_current(const MagneticModel &m, const Vec2 &i, const LociOptions &opt = {}) {
  const auto [psi, tau] = detail::operating_point(m, i, opt);
  return {i, psi, tau, std::atan2(i.q, i.d)};
}

// Current angle (from the d-axis) of largest torque at current magnitude
// i_mag: in (0, pi) for positive torque, in (-pi, 0) for negative torque.
inline LocusPoint max_torque_at_current(const MagneticModel &m, double i_mag, bool positive,
                                        const LociOptions &opt = {}) {
  const double sgn = positive ? 1.0 : -1.0;
  const auto torque = [&](double g) {
    return sgn * detail::operating_point(m, {i_mag * std::cos(g), i_mag * std::sin(g)}, opt).second;
  };
  const double lo = positive ? 0.0 : -std::numbers::pi, hi = positive ? std::numbers::pi : 0.0;
  const double g = detail::maximize_angle(torque, lo, hi, opt.angle_tol);
  const Vec2 i{i_mag * std::cos(g), i_mag * std::sin(g)};
  LocusPoint p = point_at_current(m, i, opt);
  p.angle = g;
  return p;
}

// For each torque level, the current of least magnitude that produces it.
inline std::vector<LocusPoint> mtpa_locus(const MagneticModel &m, const std::vector<double> &torque_levels,
                                          const LociOptions &opt = {}) {
  std::vector<LocusPoint> out;
  for (double level : torque_levels) {
    if (!std::isfinite(level)) throw std::invalid_argument("mtpa_locus: non-finite torque level");
    if (level == 0.0) {
      LocusPoint p = point_at_current(m, {0.0, 0.0}, opt);
      p.angle = 0.5 * std::numbers::pi;
      out.push_back(p);
      continue;
    }
    const bool positive = level > 0.0;
    const double target = std::abs(level);
    const auto reach = [&](double mag) {
      LocusPoint p = max_torque_at_current(m, mag, positive, opt);
      return std::make_pair(p, std::abs(p.tau));
    };
    auto [top, top_tau] = reach(opt.current_limit);
    if (top_tau < target) {
      throw LocusError("mtpa_locus: torque " + std::to_string(level) +
                       " is unreachable within current magnitude " +
                       std::to_string(opt.current_limit) + " (maximum " + std::to_string(top_tau) + ")");
    }
    double lo = 0.0, hi = opt.current_limit;
    LocusPoint best = top;
    while (hi - lo > 1e-13 * std::max(1.0, hi)) {
      const double mid = 0.5 * (lo + hi);
      auto [p, t] = reach(mid);
      if (t >= target) {
        hi = mid;
        best = p;
        if (std::abs(t - target) <= opt.torque_tol * std::max(1.0, target)) break;
      } else {
        lo = mid;
      }
    }
    out.push_back(best);
  }
  return out;
}

// For each flux-linkage magnitude, the flux angle of largest (motoring)
// torque, searched over psi_q >= 0, i.e. angles in [0, pi].
inline std::vector<LocusPoint> mtpv_locus(const MagneticModel &m, const std::vector<double> &flux_levels,
                                          const LociOptions &opt = {}) {
  std::vector<LocusPoint> out;
  for (double level : flux_levels) {
    if (!(level > 0.0) || !std::isfinite(level)) {
      throw std::invalid_argument("mtpv_locus: flux levels must be positive");
    }
    Vec2 guess{};
    const auto torque = [&](double a) {
      return detail::at_flux(m, {level * std::cos(a), level * std::sin(a)}, opt, &guess).second;
    };
    const double a = detail::maximize_angle(torque, 0.0, std::numbers::pi, opt.angle_tol);
    const Vec2 psi{level * std::cos(a), level * std::sin(a)};
    const auto [i, tau] = detail::at_flux(m, psi, opt);
    out.push_back({i, psi, tau, a});
  }
  return out;
}

// Image of the circle |i| = i_max under the flux map, as a closed curve of
// n_points (first and last point identical).
inline std::vector<LocusPoint> current_limit_curve(const MagneticModel &m, double i_max, int n_points,
                                                   const LociOptions &opt = {}) {
  if (!(i_max >= 0.0)) throw std::invalid_argument("current_limit_curve: i_max must be >= 0");
  if (i_max == 0.0) return {point_at_current(m, {0.0, 0.0}, opt)};
  if (n_points < 3) throw std::invalid_argument("current_limit_curve: need at least 3 points");
  std::vector<LocusPoint> out;
  Vec2 guess{};
  for (int k = 0; k + 1 < n_points; ++k) {
    const double g = 2.0 * std::numbers::pi * k / (n_points - 1);
    const Vec2 i{i_max * std::cos(g), i_max * std::sin(g)};
    const auto [psi, tau] = detail::operating_point(m, i, opt, &guess);
    out.push_back({i, psi, tau, g});
  }
  LocusPoint last = out.front();
  last.angle = 2.0 * std::numbers::pi;
  out.push_back(last);
  return out;
}

// MTPA table for control: current references over evenly spaced torque
// levels from 0 to the largest torque reachable within i_max.
struct MtpaTable {
  std::vector<double> torque;
  std::vector<Vec2> current;

  // Linear interpolation; the sign of the torque mirrors i_q. Torque beyond
  // the table saturates at its end.
  Vec2 current_for(double tau) const {
    if (torque.empty()) throw std::logic_error("MtpaTable: empty table");
    const double t = std::min(std::abs(tau), torque.back());
    const auto it = std::upper_bound(torque.begin(), torque.end(), t);
    Vec2 i;
    if (it == torque.begin()) {
      i = current.front();
    } else if (it == torque.end()) {
      i = current.back();
    } else {
      const std::size_t k = std::size_t(it - torque.begin());
      const double w = (t - torque[k - 1]) / (torque[k] - torque[k - 1]);
      i = (1.0 - w) * current[k - 1] + w * current[k];
    }
    if (tau < 0.0) i.q = -i.q;
    return i;
  }
  double max_torque() const { return torque.empty() ? 0.0 : torque.back(); }
};

inline MtpaTable build_mtpa_table(const MagneticModel &m, double i_max, int levels = 41,
                                  const LociOptions &opt = {}) {
  if (!(i_max > 0.0) || levels < 2) throw std::invalid_argument("build_mtpa_table: bad arguments");
  LociOptions o = opt;
  o.current_limit = i_max;
  const double top = max_torque_at_current(m, i_max, true, o).tau;
  std::vector<double> targets;
  for (int k = 0; k < levels; ++k) targets.push_back(top * k / (levels - 1));
  // The last level sits exactly at the reach limit; nudge it inside.
  targets.back() *= 1.0 - 1e-9;
  MtpaTable t;
  for (const LocusPoint &p : mtpa_locus(m, targets, o)) {
    t.torque.push_back(p.tau);
    t.current.push_back(p.i);
  }
  return t;
}

}  // namespace gradmag
