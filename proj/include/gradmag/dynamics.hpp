// Time-domain drive simulation in rotor coordinates.
//
// Per-unit throughout: time is measured in electrical radians at the base
// frequency (t_pu = 2 pi f_b t), so one electrical period at rated speed
// lasts 2 pi. The electrical state equation is
//   dpsi/dt = u - R_s i - omega_m J psi,  dtheta_m/dt = omega_m,
// with i and the torque from an energy-based (current-map) model. The
// mechanical equation 2H domega_m/dt = tau_m - tau_load takes the inertia
// constant H in seconds and is converted to per-unit time with f_b.
//
// The speed/flux controller used by run_acceleration is a simple cascade
// (speed PI -> torque reference -> MTPA current -> flux reference from a
// flux-map model -> deadbeat-style flux control with feedforward). It exists
// only to drive the acceleration scenario and is not a specific published
// control law.
#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gradmag/core.hpp"
#include "gradmag/inversion.hpp"
#include "gradmag/loci.hpp"
#include "gradmag/magnetics.hpp"

namespace gradmag {

struct SimState {
  Vec2 psi;
  double theta_m = 0.0;
  double omega_m = 0.0;
};

struct SimConfig {
  double R_s = 0.04;
  // Inertia constant in seconds.
  double inertia_H = 0.05;
  double base_frequency = 60.0;
  double load_torque = 0.0;
  double dt = 2.0 * std::numbers::pi / 1000.0;
  // One second at the default base frequency.
  double t_end = 2.0 * std::numbers::pi * 60.0;
  double max_current = 2.0;
  // Speed reference as a function of per-unit time.
  std::function<double(double)> speed_ref = [](double) { return 0.0; };
  // Closed-loop bandwidths (rad per unit time) of the speed and flux loops.
  double speed_bandwidth = 0.1;
  double flux_bandwidth = 0.3;
  // Every n-th step is stored in the trace.
  int record_every = 1;

  // Per-unit mechanical time constant 2H (in units of per-unit time).
  double mechanical_time_constant() const {
    return 2.0 * inertia_H * 2.0 * std::numbers::pi * base_frequency;
  }
  double seconds_to_pu(double s) const { return s * 2.0 * std::numbers::pi * base_frequency; }

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("SimConfig: dt must be > 0");
    if (!(R_s >= 0.0) || !std::isfinite(R_s)) throw std::invalid_argument("SimConfig: R_s must be >= 0");
    if (!(inertia_H > 0.0) || !(base_frequency > 0.0)) {
      throw std::invalid_argument("SimConfig: inertia_H and base_frequency must be > 0");
    }
    if (!(t_end >= 0.0) || !std::isfinite(t_end)) throw std::invalid_argument("SimConfig: t_end must be >= 0");
    if (!(max_current > 0.0)) throw std::invalid_argument("SimConfig: max_current must be > 0");
    if (!std::isfinite(load_torque)) throw std::invalid_argument("SimConfig: load_torque must be finite");
    if (!(speed_bandwidth > 0.0) || !(flux_bandwidth > 0.0)) {
      throw std::invalid_argument("SimConfig: bandwidths must be > 0");
    }
    if (record_every < 1) throw std::invalid_argument("SimConfig: record_every must be >= 1");
    if (!speed_ref) throw std::invalid_argument("SimConfig: missing speed reference");
  }
};

// Speed reference rising linearly from 0 to target over ramp_time (per-unit
// time), then held.
inline std::function<double(double)> speed_ramp(double target, double ramp_time) {
  return [=](double t) {
    if (ramp_time <= 0.0 || t >= ramp_time) return target;
    return t <= 0.0 ? 0.0 : target * t / ramp_time;
  };
}

class SimulationError : public std::runtime_error {
 public:
  SimulationError(const std::string &what, double t)
      : std::runtime_error(what + " at t = " + std::to_string(t)), t_(t) {}
  double time() const { return t_; }

 private:
  double t_;
};

// State augmented with the running electrical input energy
// int (u^T i - R_s |i|^2) dt and mechanical output energy int tau omega dt.
struct AugmentedState {
  SimState s;
  double electrical_energy = 0.0;
  double mechanical_energy = 0.0;
};

namespace detail {

inline void check_plant(const MagneticModel &m) {
  if (!m.provides_current_map()) {
    throw std::invalid_argument("simulation: the plant model must be a current map (got '" +
                                std::string(to_string(m.variant())) + "')");
  }
}

inline AugmentedState derivative(const AugmentedState &x, const Vec2 &u, const MagneticModel &m,
                                 const SimConfig &c) {
  const MagneticOutput o = m.current_map(x.s.psi, x.s.theta_m);
  const Vec2 &i = o.primal;
  AugmentedState dx;
  dx.s.psi = u - c.R_s * i - x.s.omega_m * (kJ * x.s.psi);
  dx.s.theta_m = x.s.omega_m;
  dx.s.omega_m = (o.torque - c.load_torque) / c.mechanical_time_constant();
  dx.electrical_energy = dot(u, i) - c.R_s * dot(i, i);
  dx.mechanical_energy = o.torque * x.s.omega_m;
  return dx;
}

inline AugmentedState axpy(const AugmentedState &x, double a, const AugmentedState &dx) {
  AugmentedState y;
  y.s.psi = x.s.psi + a * dx.s.psi;
  y.s.theta_m = x.s.theta_m + a * dx.s.theta_m;
  y.s.omega_m = x.s.omega_m + a * dx.s.omega_m;
  y.electrical_energy = x.electrical_energy + a * dx.electrical_energy;
  y.mechanical_energy = x.mechanical_energy + a * dx.mechanical_energy;
  return y;
}

}  // namespace detail

inline bool is_finite(const AugmentedState &x) {
  return is_finite(x.s.psi) && std::isfinite(x.s.theta_m) && std::isfinite(x.s.omega_m) &&
         std::isfinite(x.electrical_energy) && std::isfinite(x.mechanical_energy);
}

// One classical RK4 step of length h (config.dt by default) with the voltage
// held constant.
inline AugmentedState step_augmented(const AugmentedState &x, const Vec2 &u, const MagneticModel &model,
                                     const SimConfig &config, double t = 0.0, double h = 0.0) {
  if (h == 0.0) h = config.dt;
  const auto f = [&](const AugmentedState &y, double at) {
    if (!is_finite(y)) throw SimulationError("simulation: non-finite state", at);
    return detail::derivative(y, u, model, config);
  };
  const AugmentedState k1 = f(x, t);
  const AugmentedState k2 = f(detail::axpy(x, 0.5 * h, k1), t + 0.5 * h);
  const AugmentedState k3 = f(detail::axpy(x, 0.5 * h, k2), t + 0.5 * h);
  const AugmentedState k4 = f(detail::axpy(x, h, k3), t + h);
  AugmentedState y = detail::axpy(x, h / 6.0, k1);
  y = detail::axpy(y, h / 3.0, k2);
  y = detail::axpy(y, h / 3.0, k3);
  y = detail::axpy(y, h / 6.0, k4);
  if (!is_finite(y)) throw SimulationError("simulation: non-finite state", t + h);
  return y;
}

inline SimState step(const SimState &state, const Vec2 &u, const MagneticModel &model,
                     const SimConfig &config) {
  detail::check_plant(model);
  return step_augmented({state, 0.0, 0.0}, u, model, config).s;
}

struct TracePoint {
  double t = 0.0;
  Vec2 psi;
  Vec2 i;
  double tau_m = 0.0;
  double omega_m = 0.0;
  double theta_m = 0.0;
  Vec2 u;
};

struct SimTrace {
  std::vector<TracePoint> points;
  SimState initial;
  SimState final;
  double electrical_energy = 0.0;
  double mechanical_energy = 0.0;
  // Field energy change between the initial and final magnetic state.
  double field_energy_change = 0.0;
  // electrical - mechanical - field energy change.
  double energy_residual() const {
    return electrical_energy - mechanical_energy - field_energy_change;
  }
  double peak_current() const {
    double m = 0.0;
    for (const TracePoint &p : points) m = std::max(m, norm(p.i));
    return m;
  }
};

// Runs from `initial` to config.t_end with voltages from `control(t, state)`,
// evaluated once per step.
inline SimTrace simulate(const MagneticModel &model, const SimConfig &config, const SimState &initial,
                         const std::function<Vec2(double, const SimState &)> &control) {
  config.validate();
  detail::check_plant(model);
  SimTrace trace;
  trace.initial = initial;
  AugmentedState x{initial, 0.0, 0.0};
  // Fixed steps; the last one is shortened to end exactly at t_end.
  const long steps = std::lround(std::ceil(config.t_end / config.dt - 1e-9));
  auto record = [&](double t, const Vec2 &u) {
    const MagneticOutput o = model.current_map(x.s.psi, x.s.theta_m);
    trace.points.push_back({t, x.s.psi, o.primal, o.torque, x.s.omega_m, x.s.theta_m, u});
  };
  Vec2 u{};
  for (long n = 0; n < steps; ++n) {
    const double t = n * config.dt;
    u = control(t, x.s);
    if (!is_finite(u)) throw SimulationError("simulation: non-finite voltage", t);
    if (n % config.record_every == 0) record(t, u);
    const double h = n + 1 == steps ? config.t_end - t : config.dt;
    x = step_augmented(x, u, model, config, t, h);
  }
  record(steps > 0 ? config.t_end : 0.0, u);
  trace.final = x.s;
  trace.electrical_energy = x.electrical_energy;
  trace.mechanical_energy = x.mechanical_energy;
  trace.field_energy_change =
      model.field_energy_change(x.s.psi, x.s.theta_m, initial.psi, initial.theta_m, 1e-12);
  return trace;
}

// Cascaded speed and flux controller on a flux-map control model.
class DriveController {
 public:
  DriveController(const MagneticModel &control_model, const SimConfig &config)
      : control_(control_model), config_(config) {
    if (!control_model.provides_flux_map()) {
      throw std::invalid_argument("run_acceleration: the control model must be a flux map (got '" +
                                  std::string(to_string(control_model.variant())) + "')");
    }
    table_ = build_mtpa_table(control_model, config.max_current);
    const double j = config.mechanical_time_constant();
    // Closed-loop poles at -speed_bandwidth (double).
    kp_ = 2.0 * j * config.speed_bandwidth;
    ki_ = j * config.speed_bandwidth * config.speed_bandwidth;
  }

  const MtpaTable &table() const { return table_; }

  // Flux-linkage reference for a current reference.
  Vec2 flux_reference(const Vec2 &i_ref) {
    return point_at_current(control_, i_ref).psi;
  }

  Vec2 operator()(double t, const SimState &s, const Vec2 &i_meas) {
    const double err = config_.speed_ref(t) - s.omega_m;
    const double limit = table_.max_torque();
    double tau_ref = kp_ * err + integral_;
    const double clamped = std::clamp(tau_ref, -limit, limit);
    // Conditional integration as anti-windup.
    if (clamped == tau_ref || (tau_ref > limit && err < 0.0) || (tau_ref < -limit && err > 0.0)) {
      integral_ += ki_ * err * config_.dt;
    }
    tau_ref = clamped;
    const Vec2 i_ref = table_.current_for(tau_ref);
    const Vec2 psi_ref = flux_reference(i_ref);
    return config_.R_s * i_meas + s.omega_m * (kJ * s.psi) +
           config_.flux_bandwidth * (psi_ref - s.psi);
  }

 private:
  const MagneticModel &control_;
  SimConfig config_;
  MtpaTable table_;
  double kp_ = 0.0, ki_ = 0.0, integral_ = 0.0;
};

// Linear flux-map approximation of a current-map model about its
// zero-current state (angle-averaged for harmonic models), usable as control
// model when no trained flux map is at hand.
inline MagneticModel linearized_flux_map(const MagneticModel &model, int samples = 24) {
  detail::check_plant(model);
  const int n = model.harmonic() ? samples : 1;
  Vec2 psi0{};
  Mat2 gamma{};
  for (int s = 0; s < n; ++s) {
    const double th = model.harmonic() ? 2.0 * std::numbers::pi * s / (double(model.k()) * n) : 0.0;
    const Vec2 p = invert_current_map(model, {0.0, 0.0}, th, {}, 1e-13);
    psi0 = psi0 + (1.0 / n) * p;
    gamma = gamma + (1.0 / n) * model.incremental_inverse_inductance(p, th);
  }
  return MagneticModel::linear(1.0 / gamma.a11, 1.0 / gamma.a22, psi0.d);
}

// Acceleration from standstill: the plant starts at rest with zero current
// at theta_m = 0 and follows config.speed_ref under the cascaded controller.
inline SimTrace run_acceleration(const MagneticModel &model, const MagneticModel &control_model,
                                 const SimConfig &config) {
  config.validate();
  detail::check_plant(model);
  DriveController ctrl(control_model, config);
  SimState s0;
  s0.psi = invert_current_map(model, {0.0, 0.0}, 0.0, {}, 1e-13);
  return simulate(model, config, s0, [&](double t, const SimState &s) {
    return ctrl(t, s, model.current_map(s.psi, s.theta_m).primal);
  });
}

// Amplitudes of the torque Fourier components per electrical order 0..
// max_order, over the last `periods` electrical revolutions of the trace
// (integration over the rotor angle, so speed variation is tolerated).
inline std::vector<double> torque_spectrum(const SimTrace &trace, int periods, int max_order) {
  if (periods < 1 || max_order < 1) throw std::invalid_argument("torque_spectrum: bad arguments");
  const auto &p = trace.points;
  if (p.size() < 3) throw std::invalid_argument("torque_spectrum: trace too short");
  const double span = 2.0 * std::numbers::pi * periods;
  const double th_end = p.back().theta_m;
  if (th_end - p.front().theta_m < span) {
    throw std::invalid_argument("torque_spectrum: trace covers fewer than " + std::to_string(periods) +
                                " electrical periods");
  }
  std::size_t first = p.size() - 1;
  while (first > 0 && th_end - p[first].theta_m < span) --first;
  // Integrate exactly over [th_end - span, th_end]: interpolate the start.
  const double th0 = th_end - span;
  std::vector<double> cs(max_order + 1, 0.0), sn(max_order + 1, 0.0);
  auto accumulate = [&](double a, double ta, double b, double tb) {
    for (int n = 0; n <= max_order; ++n) {
      cs[n] += 0.5 * (b - a) * (ta * std::cos(n * a) + tb * std::cos(n * b));
      sn[n] += 0.5 * (b - a) * (ta * std::sin(n * a) + tb * std::sin(n * b));
    }
  };
  {
    const TracePoint &a = p[first], &b = p[first + 1];
    const double w = (th0 - a.theta_m) / (b.theta_m - a.theta_m);
    const double t0 = a.tau_m + w * (b.tau_m - a.tau_m);
    accumulate(th0, t0, b.theta_m, b.tau_m);
  }
  for (std::size_t k = first + 1; k + 1 < p.size(); ++k) {
    accumulate(p[k].theta_m, p[k].tau_m, p[k + 1].theta_m, p[k + 1].tau_m);
  }
  std::vector<double> amp(max_order + 1);
  amp[0] = cs[0] / span;
  for (int n = 1; n <= max_order; ++n) amp[n] = 2.0 * std::hypot(cs[n], sn[n]) / span;
  return amp;
}

// Electrical order (>= 1) of the largest torque ripple component.
inline int ripple_peak_order(const std::vector<double> &spectrum) {
  int best = 1;
  for (int n = 2; n < int(spectrum.size()); ++n) {
    if (spectrum[n] > spectrum[best]) best = n;
  }
  return best;
}

inline void write_trace_csv(std::ostream &out, const SimTrace &trace) {
  out << "t,psi_d,psi_q,i_d,i_q,tau_m,omega_m,u_d,u_q\n";
  out.precision(17);
  for (const TracePoint &p : trace.points) {
    out << p.t << ',' << p.psi.d << ',' << p.psi.q << ',' << p.i.d << ',' << p.i.q << ',' << p.tau_m
        << ',' << p.omega_m << ',' << p.u.d << ',' << p.u.q << '\n';
  }
}

}  // namespace gradmag
