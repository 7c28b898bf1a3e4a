// Fixed-size 2-D algebra and per-unit conventions shared by every module.
//
// Vectors in rotor coordinates are stored as (d, q). All quantities handled by
// the library are per-unit; PerUnitBase only appears where data enters or
// leaves the program.
#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gradmag {

struct Vec2 {
  double d = 0.0;
  double q = 0.0;

  constexpr Vec2 &operator+=(const Vec2 &o) {
    d += o.d;
    q += o.q;
    return *this;
  }
  constexpr Vec2 &operator-=(const Vec2 &o) {
    d -= o.d;
    q -= o.q;
    return *this;
  }
  constexpr Vec2 &operator*=(double s) {
    d *= s;
    q *= s;
    return *this;
  }

  friend constexpr Vec2 operator+(Vec2 a, const Vec2 &b) { return a += b; }
  friend constexpr Vec2 operator-(Vec2 a, const Vec2 &b) { return a -= b; }
  friend constexpr Vec2 operator-(const Vec2 &a) { return {-a.d, -a.q}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return a *= s; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return a *= s; }
  friend constexpr bool operator==(const Vec2 &, const Vec2 &) = default;
};

constexpr double dot(const Vec2 &a, const Vec2 &b) { return a.d * b.d + a.q * b.q; }
inline double norm(const Vec2 &a) { return std::hypot(a.d, a.q); }
inline bool is_finite(const Vec2 &a) { return std::isfinite(a.d) && std::isfinite(a.q); }

// Row-major 2x2 matrix.
struct Mat2 {
  double a11 = 0.0, a12 = 0.0;
  double a21 = 0.0, a22 = 0.0;

  static constexpr Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
  static constexpr Mat2 diag(double x, double y) { return {x, 0.0, 0.0, y}; }

  constexpr Vec2 operator*(const Vec2 &v) const {
    return {a11 * v.d + a12 * v.q, a21 * v.d + a22 * v.q};
  }
  constexpr Mat2 operator*(const Mat2 &m) const {
    return {a11 * m.a11 + a12 * m.a21, a11 * m.a12 + a12 * m.a22,
            a21 * m.a11 + a22 * m.a21, a21 * m.a12 + a22 * m.a22};
  }
  friend constexpr Mat2 operator+(const Mat2 &x, const Mat2 &y) {
    return {x.a11 + y.a11, x.a12 + y.a12, x.a21 + y.a21, x.a22 + y.a22};
  }
  friend constexpr Mat2 operator-(const Mat2 &x, const Mat2 &y) {
    return {x.a11 - y.a11, x.a12 - y.a12, x.a21 - y.a21, x.a22 - y.a22};
  }
  friend constexpr Mat2 operator*(double s, const Mat2 &m) {
    return {s * m.a11, s * m.a12, s * m.a21, s * m.a22};
  }
  friend constexpr bool operator==(const Mat2 &, const Mat2 &) = default;

  constexpr Mat2 transposed() const { return {a11, a21, a12, a22}; }
  constexpr double det() const { return a11 * a22 - a12 * a21; }
  constexpr double trace() const { return a11 + a22; }

  // Solves M x = b; throws if M is singular.
  Vec2 solve(const Vec2 &b) const {
    const double dt = det();
    if (dt == 0.0 || !std::isfinite(dt)) {
      throw std::domain_error("Mat2::solve: singular matrix");
    }
    return {(a22 * b.d - a12 * b.q) / dt, (a11 * b.q - a21 * b.d) / dt};
  }

  // Eigenvalues of the symmetric part, ascending.
  void sym_eigenvalues(double &lo, double &hi) const {
    const double off = 0.5 * (a12 + a21);
    const double mean = 0.5 * (a11 + a22);
    const double rad = std::hypot(0.5 * (a11 - a22), off);
    lo = mean - rad;
    hi = mean + rad;
  }
  double min_sym_eigenvalue() const {
    double lo = 0.0, hi = 0.0;
    sym_eigenvalues(lo, hi);
    return lo;
  }
};

// J = [[0, -1], [1, 0]], the 90 degree rotation.
inline constexpr Mat2 kJ{0.0, -1.0, 1.0, 0.0};
// C = diag(1, -1), conjugation of the q-axis component.
inline constexpr Mat2 kC{1.0, 0.0, 0.0, -1.0};

constexpr Vec2 apply_J(const Vec2 &x) { return {-x.q, x.d}; }
constexpr Vec2 conj_q(const Vec2 &x) { return {x.d, -x.q}; }

// exp(theta J) in closed form.
inline Mat2 rotation(double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {c, -s, s, c};
}

// Stator (alpha-beta) to rotor (dq) coordinates: exp(-theta_m J) x.
inline Vec2 rotate_to_rotor(const Vec2 &x_stator, double theta_m) {
  const double c = std::cos(theta_m);
  const double s = std::sin(theta_m);
  return {c * x_stator.d + s * x_stator.q, -s * x_stator.d + c * x_stator.q};
}

// Rotor to stator coordinates: exp(theta_m J) x.
inline Vec2 rotate_to_stator(const Vec2 &x_rotor, double theta_m) {
  const double c = std::cos(theta_m);
  const double s = std::sin(theta_m);
  return {c * x_rotor.d - s * x_rotor.q, s * x_rotor.d + c * x_rotor.q};
}

// i^T J psi = i_q psi_d - i_d psi_q.
constexpr double cross_torque(const Vec2 &i, const Vec2 &psi) {
  return i.q * psi.d - i.d * psi.q;
}

// Base values used to convert SI data to per-unit. Flux and torque bases are
// derived: psi_b = u_b / (2 pi f_b), tau_b = 1.5 n_p psi_b i_b.
struct PerUnitBase {
  double voltage_base = 0.0;    // V, peak phase
  double current_base = 0.0;    // A, peak
  double frequency_base = 0.0;  // Hz
  int pole_pairs = 1;

  void validate() const {
    if (!(voltage_base > 0.0) || !(current_base > 0.0) || !(frequency_base > 0.0) ||
        pole_pairs < 1) {
      throw std::invalid_argument("PerUnitBase: base values must be strictly positive");
    }
  }
  double angular_frequency_base() const { return 2.0 * std::numbers::pi * frequency_base; }
  double flux_base() const { return voltage_base / angular_frequency_base(); }
  double torque_base() const { return 1.5 * pole_pairs * flux_base() * current_base; }
};

}  // namespace gradmag
