// Magnetic model variants of a synchronous machine in rotor coordinates.
//
// Energy-based variants map flux linkage to current (i = dW/dpsi), co-energy
// based variants map current to flux linkage (psi = dW'/di). Symmetric
// variants average the network with its q-axis reflection; harmonic variants
// feed the Fourier features [cos k theta, sin k theta] as two extra network
// inputs and read the matching two outputs as the feature-gradient of the
// energy, which gives the angle-dependent torque.
//
// Inputs and outputs are affinely normalized so that the wrapped network
// works on O(1) values. The normalized map is
//
//   h(x) = c S g(S x + o)
//
// with S diagonal and c > 0 a scalar. Its Jacobian c S J_g S stays symmetric
// PSD, so normalization never breaks conservativity or monotonicity.
#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "gradmag/core.hpp"
#include "gradmag/gradnet.hpp"
#include "gradmag/quadrature.hpp"

namespace gradmag {

enum class Variant {
  CurrentMap,
  SymmetricCurrentMap,
  HarmonicCurrentMap,
  FluxMap,
  SymmetricFluxMap,
  HarmonicFluxMap,
  LinearBaseline,
};

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::CurrentMap: return "current";
    case Variant::SymmetricCurrentMap: return "current-sym";
    case Variant::HarmonicCurrentMap: return "harmonic-current";
    case Variant::FluxMap: return "flux";
    case Variant::SymmetricFluxMap: return "flux-sym";
    case Variant::HarmonicFluxMap: return "harmonic-flux";
    case Variant::LinearBaseline: return "linear";
  }
  return "unknown";
}

inline std::optional<Variant> parse_variant(std::string_view s) {
  for (auto v : {Variant::CurrentMap, Variant::SymmetricCurrentMap, Variant::HarmonicCurrentMap,
                 Variant::FluxMap, Variant::SymmetricFluxMap, Variant::HarmonicFluxMap,
                 Variant::LinearBaseline}) {
    if (to_string(v) == s) return v;
  }
  return std::nullopt;
}

constexpr bool is_harmonic(Variant v) {
  return v == Variant::HarmonicCurrentMap || v == Variant::HarmonicFluxMap;
}
constexpr bool is_symmetric(Variant v) {
  return v == Variant::SymmetricCurrentMap || v == Variant::SymmetricFluxMap;
}
// Energy-based: the primal output is the current.
constexpr bool is_energy_based(Variant v) {
  return v == Variant::CurrentMap || v == Variant::SymmetricCurrentMap ||
         v == Variant::HarmonicCurrentMap;
}
constexpr bool is_coenergy_based(Variant v) {
  return v == Variant::FluxMap || v == Variant::SymmetricFluxMap ||
         v == Variant::HarmonicFluxMap;
}
constexpr int input_dim_for(Variant v) { return is_harmonic(v) ? 4 : 2; }

struct MagneticOutput {
  Vec2 primal;  // current (energy-based) or flux linkage (co-energy based)
  double torque = 0.0;
};

// [cos k theta, sin k theta]. The angle is first reduced exactly modulo one
// period 2 pi / k so that k theta stays small and angles one period apart map
// to features that agree to rounding of the reduced angle.
inline Vec2 fourier_features(double theta_m, int k) {
  if (k < 1) throw std::invalid_argument("fourier_features: k must be >= 1");
  const double period = 2.0 * std::numbers::pi / k;
  double r = std::fmod(theta_m, period);
  if (r < 0.0) r += period;
  return {std::cos(k * r), std::sin(k * r)};
}

// 0.5 [g(x) + C g(C x)], given g(x) and g(C x).
constexpr Vec2 symmetrize_current(const Vec2 &g_out_plus, const Vec2 &g_out_mirror) {
  return 0.5 * (g_out_plus + conj_q(g_out_mirror));
}

struct Normalization {
  Eigen::VectorXd in_offset;
  Eigen::VectorXd in_scale;
  double out_gain = 1.0;

  static Normalization identity(int d) {
    return {Eigen::VectorXd::Zero(d), Eigen::VectorXd::Ones(d), 1.0};
  }
  void validate(int d) const {
    if (in_offset.size() != d || in_scale.size() != d) {
      throw std::invalid_argument("normalization: dimension mismatch");
    }
    if (!(out_gain > 0.0) || !(in_scale.array() > 0.0).all() || !in_offset.allFinite()) {
      throw std::invalid_argument("normalization: scales must be positive and finite");
    }
  }
};

struct LinearParams {
  double L_d = 1.0;
  double L_q = 1.0;
  double psi_f = 0.0;
};

class MagneticModel {
 public:
  static constexpr int kDefaultHarmonicOrder = 6;

  MagneticModel() = default;

  static MagneticModel network(Variant variant, GradientNetwork net,
                               int k = kDefaultHarmonicOrder,
                               std::optional<Normalization> norm = std::nullopt) {
    if (variant == Variant::LinearBaseline) {
      throw std::invalid_argument("MagneticModel: use MagneticModel::linear for the linear baseline");
    }
    if (net.input_dim() != input_dim_for(variant)) {
      throw std::invalid_argument("MagneticModel: variant '" + std::string(to_string(variant)) +
                                  "' needs a network with input dimension " +
                                  std::to_string(input_dim_for(variant)));
    }
    if (k < 1) throw std::invalid_argument("MagneticModel: k must be >= 1");
    MagneticModel m;
    m.variant_ = variant;
    m.net_ = std::move(net);
    m.k_ = k;
    m.norm_ = norm ? *norm : Normalization::identity(m.net_.input_dim());
    m.norm_.validate(m.net_.input_dim());
    return m;
  }

  static MagneticModel create(Variant variant, int hidden, ActivationKind act, std::uint64_t seed,
                              int k = kDefaultHarmonicOrder,
                              double mu_floor = GradientNetwork::kDefaultMuFloor) {
    return network(variant,
                   GradientNetwork::random(input_dim_for(variant), hidden, act, seed, mu_floor), k);
  }

  static MagneticModel linear(double L_d, double L_q, double psi_f) {
    if (!(L_d > 0.0) || !(L_q > 0.0) || !std::isfinite(psi_f)) {
      throw std::invalid_argument("MagneticModel: linear inductances must be positive");
    }
    MagneticModel m;
    m.variant_ = Variant::LinearBaseline;
    m.linear_ = {L_d, L_q, psi_f};
    return m;
  }

  Variant variant() const { return variant_; }
  int k() const { return k_; }
  bool harmonic() const { return is_harmonic(variant_); }
  bool symmetric() const { return is_symmetric(variant_); }
  bool linear_baseline() const { return variant_ == Variant::LinearBaseline; }
  bool provides_current_map() const { return linear_baseline() || is_energy_based(variant_); }
  bool provides_flux_map() const { return linear_baseline() || is_coenergy_based(variant_); }

  const GradientNetwork &net() const { return net_; }
  GradientNetwork &net() { return net_; }
  const Normalization &normalization() const { return norm_; }
  void set_normalization(Normalization n) {
    n.validate(net_.input_dim());
    norm_ = std::move(n);
  }
  const LinearParams &linear_params() const { return linear_; }

  // Guaranteed lower bound on the eigenvalues of primal_jacobian.
  double mu_floor() const {
    if (linear_baseline()) return std::min(1.0 / linear_.L_d, 1.0 / linear_.L_q);
    const double s2 = std::min(norm_.in_scale[0] * norm_.in_scale[0],
                               norm_.in_scale[1] * norm_.in_scale[1]);
    return norm_.out_gain * s2 * net_.mu_floor();
  }

  int parameter_count() const { return linear_baseline() ? 3 : net_.parameter_count(); }

  // Network input for a primal argument x at rotor angle theta_m.
  Eigen::VectorXd features(const Vec2 &x, double theta_m) const {
    Eigen::VectorXd f(input_dim_for(variant_));
    f[0] = x.d;
    f[1] = x.q;
    if (harmonic()) {
      const Vec2 th = fourier_features(theta_m, k_);
      f[2] = th.d;
      f[3] = th.q;
    }
    return f;
  }

  // h(x) = c S g(S x + o)
  Eigen::VectorXd normalized_forward(const Eigen::VectorXd &x) const {
    const Eigen::VectorXd xn = norm_.in_scale.cwiseProduct(x) + norm_.in_offset;
    return norm_.out_gain * norm_.in_scale.cwiseProduct(net_.forward(xn));
  }

  Eigen::MatrixXd normalized_jacobian(const Eigen::VectorXd &x) const {
    const Eigen::VectorXd xn = norm_.in_scale.cwiseProduct(x) + norm_.in_offset;
    const auto s = norm_.in_scale.asDiagonal();
    return norm_.out_gain * (s * net_.input_jacobian(xn) * s);
  }

  // Current map i(psi, theta_m) with torque.
  MagneticOutput current_map(const Vec2 &psi, double theta_m = 0.0) const {
    if (!provides_current_map()) {
      throw std::invalid_argument("current_map: variant '" + std::string(to_string(variant_)) +
                                  "' is a flux-linkage map");
    }
    check_finite(psi, theta_m);
    if (linear_baseline()) {
      const Vec2 i{(psi.d - linear_.psi_f) / linear_.L_d, psi.q / linear_.L_q};
      return {i, cross_torque(i, psi)};
    }
    return evaluate(psi, theta_m);
  }

  // Flux-linkage map psi(i, theta_m) with torque.
  MagneticOutput flux_map(const Vec2 &i, double theta_m = 0.0) const {
    if (!provides_flux_map()) {
      throw std::invalid_argument("flux_map: variant '" + std::string(to_string(variant_)) +
                                  "' is a current map");
    }
    check_finite(i, theta_m);
    if (linear_baseline()) {
      const Vec2 psi{linear_.L_d * i.d + linear_.psi_f, linear_.L_q * i.q};
      return {psi, cross_torque(i, psi)};
    }
    return evaluate(i, theta_m);
  }

  // Whichever direction the variant natively provides (current map for the
  // linear baseline).
  MagneticOutput primal_map(const Vec2 &x, double theta_m = 0.0) const {
    return provides_current_map() ? current_map(x, theta_m) : flux_map(x, theta_m);
  }

  // d(primal)/d(argument) at fixed rotor angle. For current maps this is the
  // incremental inverse inductance matrix.
  Mat2 primal_jacobian(const Vec2 &x, double theta_m = 0.0) const {
    if (linear_baseline()) return Mat2::diag(1.0 / linear_.L_d, 1.0 / linear_.L_q);
    const Eigen::MatrixXd j = normalized_jacobian(features(x, theta_m));
    Mat2 m{j(0, 0), j(0, 1), j(1, 0), j(1, 1)};
    if (symmetric()) {
      const Eigen::MatrixXd jm = normalized_jacobian(features(conj_q(x), theta_m));
      const Mat2 mm{jm(0, 0), jm(0, 1), jm(1, 0), jm(1, 1)};
      m = 0.5 * (m + kC * mm * kC);
    }
    return m;
  }

  Mat2 incremental_inverse_inductance(const Vec2 &psi, double theta_m = 0.0) const {
    if (!provides_current_map()) {
      throw std::invalid_argument("incremental_inverse_inductance: not a current map");
    }
    if (linear_baseline()) return Mat2::diag(1.0 / linear_.L_d, 1.0 / linear_.L_q);
    return primal_jacobian(psi, theta_m);
  }

  Mat2 incremental_inductance(const Vec2 &i, double theta_m = 0.0) const {
    if (!provides_flux_map()) throw std::invalid_argument("incremental_inductance: not a flux map");
    if (linear_baseline()) return Mat2::diag(linear_.L_d, linear_.L_q);
    return primal_jacobian(i, theta_m);
  }

  // Adds the parameter gradient of u_primal . primal + u_torque * torque at
  // argument x to grad.
  void accumulate_output_grad(const Vec2 &x, double theta_m, const Vec2 &u_primal,
                              double u_torque, ParamGrad &grad) const {
    if (linear_baseline()) throw std::invalid_argument("linear baseline has no network parameters");
    const Eigen::VectorXd f = features(x, theta_m);
    // Torque is i^T J psi; its derivative with respect to the primal output.
    const Vec2 dtau = is_energy_based(variant_) ? apply_J(x) : -apply_J(x);
    const Vec2 u = u_primal + u_torque * dtau;
    Eigen::VectorXd up = Eigen::VectorXd::Zero(f.size());
    if (symmetric()) {
      up[0] = 0.5 * u.d;
      up[1] = 0.5 * u.q;
      accumulate_normalized(f, up, grad);
      up[1] = -up[1];
      accumulate_normalized(features(conj_q(x), theta_m), up, grad);
      return;
    }
    up[0] = u.d;
    up[1] = u.q;
    if (harmonic()) {
      const Vec2 th{f[2], f[3]};
      // d(theta^T J t)/dt = -J theta
      const Vec2 dt = -apply_J(th);
      up[2] = u_torque * harmonic_sign() * k_ * dt.d;
      up[3] = u_torque * harmonic_sign() * k_ * dt.q;
    }
    accumulate_normalized(f, up, grad);
  }

  // W(psi) - W(psi_ref) at fixed rotor angle, by adaptive Gauss-Legendre
  // along the straight segment.
  double field_energy(const Vec2 &psi, double theta_m, const Vec2 &psi_ref,
                      double tol = 1e-10) const {
    if (!provides_current_map()) throw std::invalid_argument("field_energy: not a current map");
    const Vec2 dx = psi - psi_ref;
    auto integrand = [&](double t) { return dot(current_map(psi_ref + t * dx, theta_m).primal, dx); };
    return integrate_adaptive(integrand, 0.0, 1.0, tol);
  }

  // W'(i) - W'(i_ref) at fixed rotor angle.
  double co_energy(const Vec2 &i, double theta_m, const Vec2 &i_ref, double tol = 1e-10) const {
    if (!provides_flux_map()) throw std::invalid_argument("co_energy: not a flux-linkage map");
    const Vec2 dx = i - i_ref;
    auto integrand = [&](double t) { return dot(flux_map(i_ref + t * dx, theta_m).primal, dx); };
    return integrate_adaptive(integrand, 0.0, 1.0, tol);
  }

  // Energy change between (x_ref, theta_ref) and (x, theta), including the
  // angle dependence of harmonic models. The path is the straight segment in
  // the network's input space [x; cos k theta; sin k theta], on which the
  // energy is a potential.
  double field_energy_change(const Vec2 &x, double theta_m, const Vec2 &x_ref, double theta_ref,
                             double tol = 1e-10) const {
    if (!harmonic()) {
      return provides_current_map() ? field_energy(x, theta_m, x_ref, tol)
                                    : co_energy(x, theta_m, x_ref, tol);
    }
    const Eigen::VectorXd f0 = features(x_ref, theta_ref);
    const Eigen::VectorXd df = features(x, theta_m) - f0;
    auto integrand = [&](double t) { return normalized_forward(f0 + t * df).dot(df); };
    return integrate_adaptive(integrand, 0.0, 1.0, tol);
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format_version"] = kFormatVersion;
    j["variant"] = std::string(to_string(variant_));
    if (linear_baseline()) {
      j["L_d"] = linear_.L_d;
      j["L_q"] = linear_.L_q;
      j["psi_f"] = linear_.psi_f;
      return j;
    }
    j.update(net_.to_json());
    j["k"] = k_;
    const int d = net_.input_dim();
    j["normalization"] = {
        {"in_offset", std::vector<double>(norm_.in_offset.data(), norm_.in_offset.data() + d)},
        {"in_scale", std::vector<double>(norm_.in_scale.data(), norm_.in_scale.data() + d)},
        {"out_gain", norm_.out_gain}};
    return j;
  }

  static MagneticModel from_json(const nlohmann::json &j) {
    if (!j.is_object()) throw std::invalid_argument("model document: not an object");
    if (!j.contains("format_version")) {
      throw std::invalid_argument("model document: missing field 'format_version'");
    }
    const int version = j.at("format_version").get<int>();
    if (version != kFormatVersion) {
      throw std::invalid_argument("model document: unsupported format_version " +
                                  std::to_string(version));
    }
    if (!j.contains("variant")) throw std::invalid_argument("model document: missing field 'variant'");
    const std::string tag = j.at("variant").get<std::string>();
    const auto variant = parse_variant(tag);
    if (!variant) throw std::invalid_argument("model document: unknown variant '" + tag + "'");
    const auto need = [&j](const char *name) -> const nlohmann::json & {
      if (!j.contains(name)) {
        throw std::invalid_argument(std::string("model document: missing field '") + name + "'");
      }
      return j.at(name);
    };
    if (*variant == Variant::LinearBaseline) {
      return linear(need("L_d").get<double>(), need("L_q").get<double>(),
                    need("psi_f").get<double>());
    }
    GradientNetwork net = GradientNetwork::from_json(j);
    const auto &nj = need("normalization");
    Normalization norm;
    for (const char *f : {"in_offset", "in_scale", "out_gain"}) {
      if (!nj.contains(f)) {
        throw std::invalid_argument(std::string("model document: missing field 'normalization.") +
                                    f + "'");
      }
    }
    const auto off = nj.at("in_offset").get<std::vector<double>>();
    const auto sc = nj.at("in_scale").get<std::vector<double>>();
    norm.in_offset = Eigen::Map<const Eigen::VectorXd>(off.data(), Eigen::Index(off.size()));
    norm.in_scale = Eigen::Map<const Eigen::VectorXd>(sc.data(), Eigen::Index(sc.size()));
    norm.out_gain = nj.at("out_gain").get<double>();
    return network(*variant, std::move(net), need("k").get<int>(), norm);
  }

  static constexpr int kFormatVersion = 1;

 private:
  // Energy-based: tau = i^T J psi + k theta^T J dW/dtheta.
  // Co-energy based: tau = i^T J psi + dW'/dtheta_m = i^T J psi - k theta^T J dW'/dtheta.
  double harmonic_sign() const { return is_energy_based(variant_) ? 1.0 : -1.0; }

  MagneticOutput evaluate(const Vec2 &x, double theta_m) const {
    const Eigen::VectorXd f = features(x, theta_m);
    const Eigen::VectorXd out = normalized_forward(f);
    Vec2 primal{out[0], out[1]};
    if (symmetric()) {
      const Eigen::VectorXd mirror = normalized_forward(features(conj_q(x), theta_m));
      primal = symmetrize_current(primal, {mirror[0], mirror[1]});
    }
    const double tau = is_energy_based(variant_) ? cross_torque(primal, x) : cross_torque(x, primal);
    MagneticOutput res{primal, tau};
    if (harmonic()) {
      const Vec2 th{f[2], f[3]};
      const Vec2 t{out[2], out[3]};
      res.torque += harmonic_sign() * k_ * dot(th, apply_J(t));
    }
    return res;
  }

  void accumulate_normalized(const Eigen::VectorXd &f, const Eigen::VectorXd &up,
                             ParamGrad &grad) const {
    const Eigen::VectorXd xn = norm_.in_scale.cwiseProduct(f) + norm_.in_offset;
    net_.accumulate_param_grad(xn, norm_.out_gain * norm_.in_scale.cwiseProduct(up), grad);
  }

  static void check_finite(const Vec2 &x, double theta) {
    if (!is_finite(x) || !std::isfinite(theta)) {
      throw std::invalid_argument("magnetic model: non-finite input");
    }
  }

  Variant variant_ = Variant::LinearBaseline;
  GradientNetwork net_;
  int k_ = kDefaultHarmonicOrder;
  Normalization norm_ = Normalization::identity(2);
  LinearParams linear_;
};

}  // namespace gradmag
