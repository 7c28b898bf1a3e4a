#include "gradmag/training.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gradmag/dataio.hpp"
#include "oracles.hpp"

namespace gradmag {
namespace {

SampleGrid current_grid() { return synth_saturable(GridSpec{}); }

SampleGrid flux_grid() {
  GridSpec spec;
  spec.kind = DatasetKind::FluxGrid;
  spec.n_d = 9;
  spec.n_q = 7;
  spec.d_min = -0.5;
  spec.d_max = 1.2;
  spec.q_max = 1.5;
  return synth_saturable(spec);
}

SampleGrid harmonic_grid(Variant teacher) {
  GridSpec spec;
  spec.kind = DatasetKind::HarmonicGrid;
  spec.n_d = spec.n_q = 5;
  spec.n_theta = 4;
  spec.q_min = -2.0;
  spec.q_max = 2.0;
  return synth_from_model(spec, harmonic_reference(teacher, 2024));
}

const SampleGrid &grid_for(Variant v) {
  static const SampleGrid cur = current_grid(), flux = flux_grid(),
                          harm = harmonic_grid(Variant::HarmonicFluxMap);
  if (is_harmonic(v)) return harm;
  return is_energy_based(v) ? flux : cur;
}

TEST(Training, ErrorStatsMatchHandComputation) {
  const ErrorStats s = error_stats({3.0, 4.0});
  EXPECT_DOUBLE_EQ(s.e_rms, std::sqrt(12.5));
  EXPECT_DOUBLE_EQ(s.e_max, 4.0);
  EXPECT_DOUBLE_EQ(s.e_std, 0.5);
  EXPECT_EQ(s.count, 2u);
  EXPECT_THROW(error_stats({}), std::invalid_argument);
}

TEST(Training, LossesMatchDirectSums) {
  const SampleGrid g = grid_for(Variant::SymmetricFluxMap);
  const MagneticModel m = make_model(Variant::SymmetricFluxMap, 6, {Activation::PNormGradient, 1.0, 8}, 3, g);
  double sum = 0.0;
  for (const Sample &s : g.samples) {
    const Vec2 e = m.flux_map(s.i).primal - s.psi;
    sum += dot(e, e);
  }
  EXPECT_NEAR(loss_flux(m, g), sum / g.size(), 1e-15);
  EXPECT_THROW(loss_current(m, g), std::invalid_argument);

  const SampleGrid h = grid_for(Variant::HarmonicFluxMap);
  const MagneticModel hm = make_model(Variant::HarmonicFluxMap, 6, {Activation::Softmax, 1.0, 8}, 3, h);
  double comb = 0.0;
  for (const Sample &s : h.samples) {
    const MagneticOutput o = hm.flux_map(s.i, s.theta_m);
    const Vec2 e = o.primal - s.psi;
    comb += dot(e, e) / (h.psi_max * h.psi_max) + std::pow(o.torque - s.tau, 2) / (h.tau_max * h.tau_max);
  }
  EXPECT_NEAR(loss_combined(hm, h), comb / h.size(), 1e-14);
  EXPECT_EQ(default_loss(hm, h), LossKind::Combined);
  EXPECT_EQ(default_loss(m, g), LossKind::PrimalMse);
}

class TrainingAllVariants : public ::testing::TestWithParam<std::tuple<Variant, Activation>> {};

TEST_P(TrainingAllVariants, LossGradientMatchesFiniteDifferences) {
  const auto [v, a] = GetParam();
  const SampleGrid &g = grid_for(v);
  MagneticModel m = make_model(v, 5, {a, 1.0, 8}, 17, g);
  std::mt19937_64 rng(9);
  // Move away from the initialization so that every parameter matters.
  Eigen::VectorXd p = m.net().pack();
  p += oracle::random_vector(rng, int(p.size()), 0.2);
  m.net().unpack(p);
  for (LossKind kind : {LossKind::PrimalMse, LossKind::Combined}) {
    if (kind == LossKind::Combined && !g.has_torque) continue;
    const Eigen::VectorXd grad = m.net().flatten(loss_and_grad(m, g, kind).grad);
    const Eigen::MatrixXd fd = oracle::fd_jacobian(
        [&](const Eigen::VectorXd &q) {
          MagneticModel t = m;
          t.net().unpack(q);
          return Eigen::VectorXd::Constant(1, loss_and_grad(t, g, kind).value);
        },
        p);
    EXPECT_LE(oracle::max_rel_err(grad, fd.transpose()), 1e-5) << to_string(v);
  }
}

INSTANTIATE_TEST_SUITE_P(
    Training, TrainingAllVariants,
    ::testing::Combine(::testing::Values(Variant::CurrentMap, Variant::SymmetricCurrentMap,
                                         Variant::HarmonicCurrentMap, Variant::FluxMap,
                                         Variant::SymmetricFluxMap, Variant::HarmonicFluxMap),
                       ::testing::ValuesIn(oracle::all_activations())));

TEST(Training, MiniBatchLossUsesFullSetNormalizers) {
  const SampleGrid &g = grid_for(Variant::HarmonicFluxMap);
  const MagneticModel m = make_model(Variant::HarmonicFluxMap, 5, {Activation::Softmax, 1.0, 8}, 2, g);
  std::vector<std::size_t> all(g.size());
  for (std::size_t n = 0; n < g.size(); ++n) all[n] = n;
  const double full = loss_and_grad(m, g, LossKind::Combined).value;
  EXPECT_NEAR(loss_and_grad(m, g, LossKind::Combined, &all, &g).value, full, 1e-15);
}

TEST(Training, SubsamplePartitionsByStride) {
  const SampleGrid g = current_grid();
  const auto [train, hold] = subsample(g, 10);
  EXPECT_EQ(train.size(), 28u);
  EXPECT_EQ(hold.size(), 273u - 28u);
  EXPECT_EQ(train.samples[1].i, g.samples[10].i);
  EXPECT_EQ(hold.samples[0].i, g.samples[1].i);
  EXPECT_THROW(subsample(g, 0), std::invalid_argument);
}

TEST(Training, NormalizationMapsInputsToUnitBox) {
  const SampleGrid g = current_grid();
  // Flux maps take the current as input.
  const Normalization n = fit_normalization(Variant::FluxMap, g);
  double lo = INFINITY, hi = -INFINITY;
  for (const Sample &s : g.samples) {
    for (int j = 0; j < 2; ++j) {
      const double x = n.in_scale[j] * (j == 0 ? s.i.d : s.i.q) + n.in_offset[j];
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  }
  EXPECT_NEAR(lo, -1.0, 1e-14);
  EXPECT_NEAR(hi, 1.0, 1e-14);
  EXPECT_GT(n.out_gain, 0.0);
  EXPECT_EQ(fit_normalization(Variant::SymmetricFluxMap, g).in_offset[1], 0.0);
}

TEST(Training, AdamWFirstStepIsSignedLearningRate) {
  AdamW opt(3, 0.1, 0.0);
  Eigen::VectorXd p(3), g(3);
  p << 1.0, -2.0, 0.5;
  g << 4.0, -0.01, 0.0;
  opt.step(p, g);
  // Bias correction makes the first update lr * g / (|g| + eps).
  EXPECT_NEAR(p[0], 0.9, 1e-9);
  EXPECT_NEAR(p[1], -1.9, 1e-6);
  EXPECT_DOUBLE_EQ(p[2], 0.5);
  AdamW wd(1, 0.1, 0.5);
  Eigen::VectorXd q = Eigen::VectorXd::Constant(1, 2.0);
  wd.step(q, Eigen::VectorXd::Zero(1));
  EXPECT_DOUBLE_EQ(q[0], 2.0 * (1.0 - 0.05));
  EXPECT_THROW(AdamW(1, 0.0, 0.0), std::invalid_argument);
}

TEST(Training, FitReducesLossAndIsDeterministic) {
  const SampleGrid g = current_grid();
  const auto [train, hold] = subsample(g, 5);
  const MagneticModel m0 = make_model(Variant::SymmetricCurrentMap, 8, {Activation::PNormGradient, 1.0, 8}, 1, train);
  TrainConfig c;
  c.epochs = 400;
  c.holdout_every = 50;
  const FitResult a = fit(m0, train, c, &hold);
  const FitResult b = fit(m0, train, c, &hold);
  EXPECT_LT(a.final_loss, 0.1 * a.initial_loss);
  EXPECT_EQ(a.model.to_json().dump(), b.model.to_json().dump());
  ASSERT_EQ(a.trace.size(), 400u);
  EXPECT_TRUE(std::isnan(a.trace[0].e_rms_holdout));
  EXPECT_FALSE(std::isnan(a.trace[49].e_rms_holdout));
  EXPECT_FALSE(std::isnan(a.trace.back().e_rms_holdout));
  // Monotonicity floor survives training.
  EXPECT_TRUE((a.model.net().a0_diag().array() >= a.model.net().mu_floor()).all());
  EXPECT_GT(a.model.net().activation().beta, 0.0);

  c.batch_size = 16;
  c.seed = 4;
  const FitResult mb = fit(m0, train, c);
  EXPECT_LT(mb.final_loss, 0.1 * mb.initial_loss);
  c.seed = 5;
  EXPECT_NE(fit(m0, train, c).model.to_json().dump(), mb.model.to_json().dump());
}

TEST(Training, FitRejectsIncompatibleInputs) {
  const SampleGrid g = current_grid();
  const MagneticModel h = MagneticModel::create(Variant::HarmonicFluxMap, 4, {Activation::Softmax, 1.0, 8}, 1);
  TrainConfig c;
  c.epochs = 1;
  EXPECT_THROW(fit(h, g, c), std::invalid_argument);
  EXPECT_THROW(fit(MagneticModel::linear(0.4, 1.0, 0.4), g, c), std::invalid_argument);
  c.learning_rate = -1.0;
  EXPECT_THROW(fit(make_model(Variant::FluxMap, 4, {Activation::AlgebraicSigmoid, 1.0, 8}, 1, g), g, c),
               std::invalid_argument);
  SampleGrid empty;
  c = TrainConfig{};
  EXPECT_THROW(fit(make_model(Variant::FluxMap, 4, {Activation::AlgebraicSigmoid, 1.0, 8}, 1, g), empty, c),
               std::invalid_argument);
}

TEST(Training, EvaluateReportsPrimalAndTorqueErrors) {
  const SampleGrid g = current_grid();
  const MagneticModel m = make_model(Variant::SymmetricFluxMap, 4, {Activation::Softmax, 1.0, 8}, 2, g);
  const ErrorReport r = evaluate(m, g);
  EXPECT_EQ(r.primal_name, "flux");
  ASSERT_TRUE(r.torque.has_value());
  std::vector<double> ep, et;
  for (const Sample &s : g.samples) {
    const MagneticOutput o = m.flux_map(s.i);
    ep.push_back(norm(o.primal - s.psi));
    et.push_back(std::abs(o.torque - s.tau));
  }
  EXPECT_NEAR(r.primal.e_rms, error_stats(ep).e_rms, 1e-15);
  EXPECT_NEAR(r.torque->e_max, error_stats(et).e_max, 1e-15);
  // The linear baseline is evaluated as a current map; on its own data the
  // error is at rounding level.
  const MagneticModel lin = MagneticModel::linear(0.53, 1.28, 0.45);
  const ErrorReport lr = evaluate(lin, synth_linear(GridSpec{}, 0.53, 1.28, 0.45));
  EXPECT_EQ(lr.primal_name, "current");
  EXPECT_LE(lr.primal.e_rms, 1e-15);
}

}  // namespace
}  // namespace gradmag
