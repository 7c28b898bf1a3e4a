#include "gradmag/dynamics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "fixtures.hpp"
#include "gradmag/dataio.hpp"

namespace gradmag {
namespace {

constexpr double kPi = std::numbers::pi;

// Voltage that cancels resistance and rotation, leaving dpsi/dt = 0.
Vec2 feedforward(const MagneticModel &m, const SimConfig &c, const SimState &s) {
  return c.R_s * m.current_map(s.psi, s.theta_m).primal + s.omega_m * (kJ * s.psi);
}

double state_error(const SimState &a, const SimState &b) {
  return std::max({norm(a.psi - b.psi), std::abs(a.theta_m - b.theta_m), std::abs(a.omega_m - b.omega_m)});
}

SimState run_open_loop(const MagneticModel &m, double dt, double t_end, const SimState &s0, const Vec2 &u) {
  SimConfig c;
  c.dt = dt;
  c.t_end = t_end;
  c.R_s = 0.05;
  return simulate(m, c, s0, [&](double, const SimState &) { return u; }).final;
}

TEST(Dynamics, ConfigValidation) {
  SimConfig c;
  EXPECT_NO_THROW(c.validate());
  c.dt = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = SimConfig{};
  c.R_s = -0.1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = SimConfig{};
  c.inertia_H = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  // Default step: 1000 steps per electrical period at rated speed.
  EXPECT_DOUBLE_EQ(SimConfig{}.dt, 2 * kPi / 1000);
  EXPECT_NEAR(SimConfig{}.mechanical_time_constant(), 0.1 * 2 * kPi * 60, 1e-12);
}

TEST(Dynamics, UnexcitedMachineAtRestStaysFrozen) {
  const MagneticModel m = MagneticModel::linear(0.45, 1.05, 0.46);
  SimConfig c;
  c.R_s = 0.0;
  SimState s{{0.46, 0.0}, 0.3, 0.0};
  for (int n = 0; n < 100; ++n) s = step(s, {0.0, 0.0}, m, c);
  EXPECT_EQ(s.psi, (Vec2{0.46, 0.0}));
  EXPECT_EQ(s.theta_m, 0.3);
  EXPECT_EQ(s.omega_m, 0.0);
}

TEST(Dynamics, FeedforwardVoltageHoldsFluxConstant) {
  for (Variant v : {Variant::SymmetricCurrentMap, Variant::CurrentMap}) {
    const MagneticModel m = fixture::machine_like(v, 9);
    SimConfig c;
    const SimState s0{{0.3, 0.5}, 0.0, 0.8};
    // Load equal to the electromagnetic torque keeps the speed constant.
    c.load_torque = m.current_map(s0.psi).torque;
    c.t_end = 50.0;
    const SimTrace tr = simulate(m, c, s0, [&](double, const SimState &s) { return feedforward(m, c, s); });
    EXPECT_LE(norm(tr.final.psi - s0.psi), 1e-13);
    EXPECT_NEAR(tr.final.omega_m, 0.8, 1e-13);
    EXPECT_NEAR(tr.final.theta_m, 0.8 * tr.points.back().t, 1e-10);
    // Non-harmonic model at constant (psi, omega): no torque ripple.
    for (const TracePoint &p : tr.points) EXPECT_NEAR(p.tau_m, c.load_torque, 1e-12);
  }
}

TEST(Dynamics, Rk4ConvergesWithFourthOrder) {
  const MagneticModel plant = harmonic_reference(Variant::HarmonicCurrentMap, 2024);
  const SimState s0{{0.7, 0.4}, 0.1, 0.6};
  const Vec2 u{0.2, 0.9};
  const double t_end = 4.0 * kPi, h = 0.2;
  const SimState ref = run_open_loop(plant, h / 8, t_end, s0, u);
  const double e1 = state_error(run_open_loop(plant, h, t_end, s0, u), ref);
  const double e2 = state_error(run_open_loop(plant, h / 2, t_end, s0, u), ref);
  // Richardson: e(h) ~ C h^p; the h/8 reference biases the estimate only
  // by (1/8)^4 relative.
  const double order = std::log2(e1 / e2);
  EXPECT_GE(order, 3.8) << "e(h) = " << e1 << ", e(h/2) = " << e2;
  EXPECT_LE(order, 4.3);
}

TEST(Dynamics, EnergyBalanceClosesWithAndWithoutResistance) {
  const MagneticModel plant = harmonic_reference(Variant::HarmonicCurrentMap, 2024);
  for (double r : {0.0, 0.05}) {
    SimConfig c;
    c.R_s = r;
    c.load_torque = 0.2;
    c.t_end = 60.0;
    const SimState s0{{0.5, 0.3}, 0.0, 0.7};
    const SimTrace tr = simulate(plant, c, s0, [&](double t, const SimState &s) {
      return feedforward(plant, c, s) + Vec2{0.1 * std::sin(0.3 * t), 0.05 * std::cos(0.7 * t)};
    });
    EXPECT_GT(std::abs(tr.electrical_energy), 0.1);
    EXPECT_LE(std::abs(tr.energy_residual()), 1e-9) << "R_s = " << r;
  }
}

TEST(Dynamics, NonFiniteStatesReportTheTime) {
  const MagneticModel m = MagneticModel::linear(0.45, 1.05, 0.46);
  SimConfig c;
  c.t_end = 1.0;
  try {
    simulate(m, c, {{0.46, 0.0}, 0.0, 0.0}, [](double t, const SimState &) {
      return t > 0.5 ? Vec2{NAN, 0.0} : Vec2{0.0, 0.0};
    });
    FAIL() << "expected SimulationError";
  } catch (const SimulationError &e) {
    EXPECT_GT(e.time(), 0.5);
    EXPECT_NE(std::string(e.what()).find("t = "), std::string::npos);
  }
  EXPECT_THROW(step_augmented({{0.46, 0.0}, 0.0, 0.0}, {1e308, 1e308}, m, c), SimulationError);
}

TEST(Dynamics, RejectsWrongModelDirections) {
  const MagneticModel flux = fixture::machine_like(Variant::SymmetricFluxMap, 1);
  const MagneticModel cur = fixture::machine_like(Variant::SymmetricCurrentMap, 1);
  SimConfig c;
  EXPECT_THROW(step({}, {}, flux, c), std::invalid_argument);
  EXPECT_THROW(run_acceleration(cur, cur, c), std::invalid_argument);
  EXPECT_THROW(run_acceleration(flux, flux, c), std::invalid_argument);
}

TEST(Dynamics, ZeroSpeedReferenceKeepsDriveAtRest) {
  const MagneticModel m = MagneticModel::linear(0.45, 1.05, 0.46);
  SimConfig c;
  c.t_end = 20.0;
  const SimTrace tr = run_acceleration(m, m, c);
  for (const TracePoint &p : tr.points) {
    EXPECT_EQ(p.omega_m, 0.0);
    EXPECT_LE(norm(p.i), 1e-15);
  }
}

TEST(Dynamics, AccelerationReachesSpeedWithinCurrentLimit) {
  const MagneticModel m = MagneticModel::linear(0.45, 1.05, 0.46);
  SimConfig c;
  c.t_end = c.seconds_to_pu(0.5);
  c.max_current = 1.5;
  c.speed_ref = speed_ramp(1.0, c.seconds_to_pu(0.05));
  const SimTrace tr = run_acceleration(m, m, c);
  EXPECT_NEAR(tr.final.omega_m, 1.0, 1e-3);
  // References are limited; the measured current overshoots them only by
  // the flux-tracking transient.
  EXPECT_LE(tr.peak_current(), 1.05 * c.max_current);
  EXPECT_GE(tr.peak_current(), 0.9 * c.max_current);
  EXPECT_LE(std::abs(tr.energy_residual()), 1e-8);
}

TEST(Dynamics, HarmonicRunShowsRippleOfOrderK) {
  const MagneticModel plant = harmonic_reference(Variant::HarmonicCurrentMap, 2024);
  const MagneticModel control = linearized_flux_map(plant);
  SimConfig c;
  c.t_end = c.seconds_to_pu(0.5);
  c.speed_ref = speed_ramp(1.0, c.seconds_to_pu(0.1));
  const SimTrace tr = run_acceleration(plant, control, c);
  EXPECT_NEAR(tr.final.omega_m, 1.0, 0.01);
  const auto spectrum = torque_spectrum(tr, 10, 13);
  EXPECT_EQ(ripple_peak_order(spectrum), 6);
  for (int n = 1; n <= 13; ++n) {
    if (n != 6 && n != 12) EXPECT_LT(spectrum[n], 1e-3 * spectrum[6]) << "order " << n;
  }
  EXPECT_LE(std::abs(tr.energy_residual()), 1e-6);
}

TEST(Dynamics, TorqueSpectrumRecoversKnownComponents) {
  SimTrace tr;
  for (int n = 0; n <= 40000; ++n) {
    // Slightly varying speed: the spectrum is taken over the rotor angle.
    const double t = n * 1e-3;
    const double th = t + 0.05 * std::sin(0.5 * t);
    TracePoint p;
    p.t = t;
    p.theta_m = th;
    p.tau_m = 0.3 + 0.1 * std::cos(6 * th + 0.2) + 0.02 * std::sin(2 * th);
    tr.points.push_back(p);
  }
  const auto s = torque_spectrum(tr, 5, 8);
  EXPECT_NEAR(s[0], 0.3, 1e-6);
  EXPECT_NEAR(s[2], 0.02, 1e-6);
  EXPECT_NEAR(s[6], 0.1, 1e-6);
  EXPECT_NEAR(s[1], 0.0, 1e-6);
  EXPECT_EQ(ripple_peak_order(s), 6);
  EXPECT_THROW(torque_spectrum(tr, 100, 8), std::invalid_argument);
}

TEST(Dynamics, LinearizationOfLinearModelIsExact) {
  const MagneticModel m = MagneticModel::linear(0.45, 1.05, 0.46);
  const MagneticModel l = linearized_flux_map(m);
  const Vec2 i{-0.4, 0.9};
  EXPECT_NEAR(norm(l.flux_map(i).primal - m.flux_map(i).primal), 0.0, 1e-13);
}

TEST(Dynamics, TraceCsvHasDocumentedColumns) {
  const MagneticModel m = MagneticModel::linear(0.45, 1.05, 0.46);
  SimConfig c;
  c.t_end = 10 * c.dt;
  const SimTrace tr = run_acceleration(m, m, c);
  std::ostringstream out;
  write_trace_csv(out, tr);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,psi_d,psi_q,i_d,i_q,tau_m,omega_m,u_d,u_q");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 11);
}

}  // namespace
}  // namespace gradmag
