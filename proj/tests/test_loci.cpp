#include "gradmag/loci.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fixtures.hpp"
#include "oracles.hpp"

namespace gradmag {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;

double torque_at_angle(const MagneticModel &m, double mag, double gamma) {
  return point_at_current(m, {mag * std::cos(gamma), mag * std::sin(gamma)}).tau;
}

double torque_at_flux_angle(const MagneticModel &m, double mag, double delta) {
  const Vec2 psi{mag * std::cos(delta), mag * std::sin(delta)};
  if (m.provides_current_map()) return m.current_map(psi).torque;
  return m.flux_map(invert_flux_map(m, psi, 0.0, {}, 1e-13)).torque;
}

// Optimality certificate of an MTPA point: +-1 degree at the same current
// magnitude gives no more torque, and the angle derivative vanishes.
void expect_mtpa_optimal(const MagneticModel &m, const LocusPoint &p, double tol = 1e-8) {
  const double mag = norm(p.i);
  const double g = std::atan2(p.i.q, p.i.d);
  EXPECT_LE(torque_at_angle(m, mag, g + kDeg), p.tau + tol);
  EXPECT_LE(torque_at_angle(m, mag, g - kDeg), p.tau + tol);
  const double h = 1e-5;
  const double dtau = (torque_at_angle(m, mag, g + h) - torque_at_angle(m, mag, g - h)) / (2 * h);
  EXPECT_LE(std::abs(dtau), tol);
}

TEST(Loci, MtpaIsQAxisWithoutSaliency) {
  const MagneticModel m = MagneticModel::linear(0.8, 0.8, 0.5);
  for (const LocusPoint &p : mtpa_locus(m, {0.1, 0.5, 1.0})) {
    EXPECT_NEAR(std::atan2(p.i.q, p.i.d) / kDeg, 90.0, 1e-6);
    EXPECT_NEAR(p.i.q, p.tau / 0.5, 1e-9);
  }
}

TEST(Loci, MtpaOfPureReluctanceMachineIs135Degrees) {
  const double L_d = 0.4, L_q = 1.2;
  const MagneticModel m = MagneticModel::linear(L_d, L_q, 0.0);
  for (double tau : {0.05, 0.3, 1.0}) {
    const LocusPoint p = mtpa_locus(m, {tau}).front();
    EXPECT_NEAR(std::atan2(p.i.q, p.i.d) / kDeg, 135.0, 1e-6);
    // tau = (L_q - L_d) |i|^2 / 2 at 135 degrees.
    EXPECT_NEAR(norm(p.i), std::sqrt(2.0 * tau / (L_q - L_d)), 1e-9);
    EXPECT_NEAR(p.tau, tau, 1e-10);
  }
}

TEST(Loci, MtpaMatchesClosedFormForLinearMachine) {
  const double L_d = 0.45, L_q = 1.05, psi_f = 0.46, dl = L_q - L_d;
  const MagneticModel m = MagneticModel::linear(L_d, L_q, psi_f);
  for (double tau : {0.1, 0.5, 1.0, 1.5}) {
    const LocusPoint p = mtpa_locus(m, {tau}).front();
    const double mag = norm(p.i);
    // Stationarity of tau at fixed |i| gives i_d in closed form.
    const double i_d = psi_f / (4 * dl) - std::sqrt(psi_f * psi_f / (16 * dl * dl) + mag * mag / 2);
    EXPECT_NEAR(p.i.d, i_d, 1e-8);
    EXPECT_NEAR(p.tau, tau, 1e-10);
    expect_mtpa_optimal(m, p);
  }
}

TEST(Loci, MtpaPointsOfNetworkModelsPassCertificates) {
  for (Variant v : {Variant::SymmetricFluxMap, Variant::FluxMap, Variant::SymmetricCurrentMap}) {
    const MagneticModel m = fixture::machine_like(v, 11);
    const std::vector<double> levels{0.1, 0.4, 0.8};
    const auto locus = mtpa_locus(m, levels);
    for (std::size_t n = 0; n < locus.size(); ++n) {
      const LocusPoint &p = locus[n];
      EXPECT_NEAR(p.tau, levels[n], 1e-10);
      expect_mtpa_optimal(m, p);
      // Least current: a dense scan of smaller magnitudes never reaches the level.
      const double mag = norm(p.i);
      double best = -INFINITY;
      for (int k = 0; k <= 1800; ++k) best = std::max(best, torque_at_angle(m, 0.999 * mag, k * kPi / 1800));
      EXPECT_LT(best, p.tau);
    }
  }
}

TEST(Loci, MtpaViaCurrentMapInversionIsConsistent) {
  const MagneticModel m = fixture::machine_like(Variant::SymmetricCurrentMap, 5);
  const LocusPoint p = mtpa_locus(m, {0.6}).front();
  const MagneticOutput o = m.current_map(p.psi);
  EXPECT_NEAR(o.primal.d, p.i.d, 1e-10);
  EXPECT_NEAR(o.primal.q, p.i.q, 1e-10);
  EXPECT_NEAR(o.torque, 0.6, 1e-9);
}

TEST(Loci, MtpaSpecialLevelsAndErrors) {
  const MagneticModel m = MagneticModel::linear(0.45, 1.05, 0.46);
  const LocusPoint zero = mtpa_locus(m, {0.0}).front();
  EXPECT_EQ(zero.i, (Vec2{0.0, 0.0}));
  EXPECT_DOUBLE_EQ(zero.psi.d, 0.46);

  // Negative torque mirrors the motoring point in i_q.
  const LocusPoint pos = mtpa_locus(m, {0.7}).front(), neg = mtpa_locus(m, {-0.7}).front();
  EXPECT_NEAR(neg.i.d, pos.i.d, 1e-9);
  EXPECT_NEAR(neg.i.q, -pos.i.q, 1e-9);
  EXPECT_NEAR(neg.tau, -0.7, 1e-10);

  LociOptions opt;
  opt.current_limit = 1.0;
  EXPECT_THROW(mtpa_locus(m, {5.0}, opt), LocusError);
  EXPECT_THROW(mtpa_locus(m, {NAN}), std::invalid_argument);
}

TEST(Loci, MtpvOfReluctanceMachineIs45Degrees) {
  const MagneticModel m = MagneticModel::linear(1.2, 0.4, 0.0);
  for (const LocusPoint &p : mtpv_locus(m, {0.5, 1.0})) {
    EXPECT_NEAR(p.angle / kDeg, 45.0, 1e-6);
    EXPECT_NEAR(norm(p.psi), std::abs(p.psi.d) * std::sqrt(2.0), 1e-9);
  }
  // Saliency the other way round moves the optimum to 135 degrees.
  const MagneticModel r = MagneticModel::linear(0.4, 1.2, 0.0);
  EXPECT_NEAR(mtpv_locus(r, {1.0}).front().angle / kDeg, 135.0, 1e-6);
}

TEST(Loci, MtpvPointsAreOptimalAndTorqueGrowsWithFlux) {
  const MagneticModel lin = MagneticModel::linear(0.45, 1.05, 0.46);
  const MagneticModel net = fixture::machine_like(Variant::SymmetricCurrentMap, 3);
  const MagneticModel flux = fixture::machine_like(Variant::SymmetricFluxMap, 3);
  for (const MagneticModel *m : {&lin, &net, &flux}) {
    std::vector<double> levels;
    for (int k = 1; k <= 8; ++k) levels.push_back(0.15 * k);
    const auto locus = mtpv_locus(*m, levels);
    for (std::size_t n = 0; n < locus.size(); ++n) {
      const LocusPoint &p = locus[n];
      const double mag = norm(p.psi);
      EXPECT_NEAR(mag, levels[n], 1e-12);
      EXPECT_LE(torque_at_flux_angle(*m, mag, p.angle + kDeg), p.tau + 1e-8);
      EXPECT_LE(torque_at_flux_angle(*m, mag, p.angle - kDeg), p.tau + 1e-8);
      const double h = 1e-5;
      const double d = (torque_at_flux_angle(*m, mag, p.angle + h) - torque_at_flux_angle(*m, mag, p.angle - h)) / (2 * h);
      EXPECT_LE(std::abs(d), 1e-7);
      if (n > 0 && m == &lin) EXPECT_GE(p.tau, locus[n - 1].tau);
    }
  }
  EXPECT_THROW(mtpv_locus(lin, {0.0}), std::invalid_argument);
}

TEST(Loci, CurrentLimitCurveOfLinearMachineIsEllipse) {
  const double L_d = 0.45, L_q = 1.05, psi_f = 0.46, i_max = 1.5;
  const MagneticModel m = MagneticModel::linear(L_d, L_q, psi_f);
  const auto curve = current_limit_curve(m, i_max, 73);
  ASSERT_EQ(curve.size(), 73u);
  for (const LocusPoint &p : curve) {
    const double a = (p.psi.d - psi_f) / (L_d * i_max), b = p.psi.q / (L_q * i_max);
    EXPECT_NEAR(a * a + b * b, 1.0, 1e-12);
    EXPECT_NEAR(p.tau, psi_f * p.i.q + (L_d - L_q) * p.i.d * p.i.q, 1e-12);
  }
  EXPECT_LE(norm(curve.front().psi - curve.back().psi), 1e-12);

  const auto origin = current_limit_curve(m, 0.0, 50);
  ASSERT_EQ(origin.size(), 1u);
  EXPECT_EQ(origin.front().psi, (Vec2{psi_f, 0.0}));
  EXPECT_THROW(current_limit_curve(m, 1.0, 2), std::invalid_argument);
}

TEST(Loci, CurrentLimitCurveOfNetworkIsClosed) {
  const MagneticModel m = fixture::machine_like(Variant::SymmetricFluxMap, 21);
  for (double i_max : {0.5, 1.0, 2.0}) {
    const auto curve = current_limit_curve(m, i_max, 91);
    EXPECT_LE(norm(curve.front().psi - curve.back().psi), 1e-12);
    for (const LocusPoint &p : curve) EXPECT_NEAR(norm(p.i), i_max, 1e-12);
  }
}

TEST(Loci, MtpaLocusOfSmoothModelHasBoundedSecondDifferences) {
  const MagneticModel m = fixture::machine_like(Variant::SymmetricFluxMap, 7);
  std::vector<double> levels;
  for (int k = 1; k <= 30; ++k) levels.push_back(0.04 * k);
  const auto locus = mtpa_locus(m, levels);
  std::vector<double> second;
  for (std::size_t n = 1; n + 1 < locus.size(); ++n) {
    second.push_back(norm(locus[n + 1].i - 2.0 * locus[n].i + locus[n - 1].i));
  }
  std::vector<double> sorted = second;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double median = sorted[sorted.size() / 2];
  EXPECT_LE(*std::max_element(second.begin(), second.end()), 10.0 * median);
}

TEST(Loci, HarmonicModelsAreAveragedOverOnePeriod) {
  std::mt19937_64 rng(4);
  GradientNetwork net(4, 6, {Activation::Softmax, 1.0, 8});
  net.A() = Eigen::MatrixXd::NullaryExpr(6, 4, [&] { return oracle::uniform(rng, -0.5, 0.5); });
  net.b() = oracle::random_vector(rng, 6, 0.5);
  net.set_a0_raw(oracle::random_vector(rng, 4, 1.0));
  const MagneticModel m = MagneticModel::network(Variant::HarmonicFluxMap, net, 6, Normalization::identity(4));
  LociOptions opt;
  opt.harmonic_samples = 12;
  const Vec2 i{-0.3, 0.8};
  const LocusPoint p = point_at_current(m, i, opt);
  double tau = 0.0;
  for (int s = 0; s < 12; ++s) tau += m.flux_map(i, s * (kPi / 3.0) / 12.0).torque / 12.0;
  EXPECT_NEAR(p.tau, tau, 1e-14);
}

TEST(Loci, MtpaTableInterpolatesAndSaturates) {
  const MagneticModel m = MagneticModel::linear(0.45, 1.05, 0.46);
  const MtpaTable t = build_mtpa_table(m, 2.0, 21);
  ASSERT_EQ(t.torque.size(), 21u);
  EXPECT_EQ(t.current_for(0.0), (Vec2{0.0, 0.0}));
  EXPECT_LE(norm(t.current.back()), 2.0 + 1e-9);
  EXPECT_GE(norm(t.current.back()), 2.0 - 1e-6);
  EXPECT_EQ(t.current_for(10.0), t.current.back());
  const Vec2 a = t.current_for(0.5), b = t.current_for(-0.5);
  EXPECT_DOUBLE_EQ(a.d, b.d);
  EXPECT_DOUBLE_EQ(a.q, -b.q);
  for (std::size_t k = 0; k < t.torque.size(); ++k) {
    EXPECT_NEAR(norm(t.current_for(t.torque[k]) - t.current[k]), 0.0, 1e-12);
  }
  // Between nodes the interpolated torque stays close to the demand.
  EXPECT_NEAR(point_at_current(m, a).tau, 0.5, 5e-3);
}

}  // namespace
}  // namespace gradmag
