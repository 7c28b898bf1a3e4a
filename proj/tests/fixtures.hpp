// Machine-like network models shared by the loci, inversion and dynamics
// tests.
#pragma once

#include <random>

#include "gradmag/magnetics.hpp"

namespace fixture {

// A seeded non-harmonic network model with machine-like magnitudes: a
// saturating map around a d-axis magnet flux of 0.45 p.u. (flux maps:
// psi(0) = [0.45, 0]; current maps: i([0.45, 0]) = 0).
inline gradmag::MagneticModel machine_like(gradmag::Variant variant, std::uint64_t seed, int hidden = 12) {
  using namespace gradmag;
  GradientNetwork net(2, hidden, {Activation::Softmax, 2.0, 8});
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int r = 0; r < hidden; ++r) {
    net.A()(r, 0) = 0.6 * normal(rng);
    net.A()(r, 1) = 0.6 * normal(rng);
    net.b()[r] = 0.5 * normal(rng);
  }
  const bool flux = is_coenergy_based(variant);
  Eigen::VectorXd a0(2);
  a0 << (flux ? 0.3 : 1.6), (flux ? 0.8 : 0.7);
  net.set_a0_diag(a0);
  MagneticModel m = MagneticModel::network(variant, net, 6, Normalization::identity(2));
  const Vec2 x0{flux ? 0.0 : 0.45, 0.0};
  const Vec2 target{flux ? 0.45 : 0.0, 0.0};
  const Vec2 off = target - m.primal_map(x0).primal;
  net.b0()[0] += off.d;
  if (!is_symmetric(variant)) net.b0()[1] += off.q;
  return MagneticModel::network(variant, std::move(net), 6, Normalization::identity(2));
}

}  // namespace fixture
