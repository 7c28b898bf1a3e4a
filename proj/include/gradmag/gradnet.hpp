// Single-hidden-layer monotone gradient network
//
//   z = A x + b
//   g(x) = A0 x + b0 + A^T sigma(z)
//
// with A0 = diag(mu) >= 0 and sigma an activation whose Jacobian is symmetric
// PSD. The input Jacobian A0 + A^T J_sigma A is therefore symmetric PSD for
// every parameter value, which makes g the gradient of a convex potential.
#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "gradmag/activation.hpp"

namespace gradmag {

namespace detail {

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double softplus_inverse(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

}  // namespace detail

// Gradient of a scalar with respect to every learnable parameter. The slots
// mirror GradientNetwork's raw storage (log beta, softplus-raw A0 entries).
struct ParamGrad {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::VectorXd a0_raw;
  Eigen::VectorXd b0;
  double log_beta = 0.0;

  static ParamGrad zeros(int d, int n) {
    return {Eigen::MatrixXd::Zero(n, d), Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(d),
            Eigen::VectorXd::Zero(d), 0.0};
  }
  ParamGrad &operator+=(const ParamGrad &o) {
    A += o.A;
    b += o.b;
    a0_raw += o.a0_raw;
    b0 += o.b0;
    log_beta += o.log_beta;
    return *this;
  }
  ParamGrad &operator*=(double s) {
    A *= s;
    b *= s;
    a0_raw *= s;
    b0 *= s;
    log_beta *= s;
    return *this;
  }
};

class GradientNetwork {
 public:
  static constexpr double kDefaultMuFloor = 1e-3;

  GradientNetwork() = default;

  // Zero-initialized network. For D = 4 the last two diagonal entries of A0
  // (the angle-feature block) are pinned to zero.
  GradientNetwork(int input_dim, int hidden, ActivationKind activation,
                  double mu_floor = kDefaultMuFloor)
      : d_(input_dim), n_(hidden), type_(activation.type), p_(activation.p),
        mu_floor_(mu_floor) {
    if (input_dim != 2 && input_dim != 4) {
      throw std::invalid_argument("GradientNetwork: input dimension must be 2 or 4");
    }
    if (hidden < 1) throw std::invalid_argument("GradientNetwork: need at least one hidden unit");
    if (!(mu_floor >= 0.0)) throw std::invalid_argument("GradientNetwork: mu floor must be >= 0");
    activation.validate();
    log_beta_ = std::log(activation.beta);
    A_ = Eigen::MatrixXd::Zero(n_, d_);
    b_ = Eigen::VectorXd::Zero(n_);
    a0_raw_ = Eigen::VectorXd::Zero(d_);
    b0_ = Eigen::VectorXd::Zero(d_);
  }

  // Random initialization: A ~ N(0, 1/D), zero biases, A0 entries at
  // mu_floor + log 2.
  static GradientNetwork random(int input_dim, int hidden, ActivationKind activation,
                                std::uint64_t seed, double mu_floor = kDefaultMuFloor) {
    GradientNetwork net(input_dim, hidden, activation, mu_floor);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(double(input_dim)));
    for (int i = 0; i < hidden; ++i) {
      for (int j = 0; j < input_dim; ++j) net.A_(i, j) = normal(rng);
    }
    return net;
  }

  int input_dim() const { return d_; }
  int hidden() const { return n_; }
  double mu_floor() const { return mu_floor_; }
  ActivationKind activation() const { return {type_, std::exp(log_beta_), p_}; }
  bool a0_free(int j) const { return j < 2; }

  const Eigen::MatrixXd &A() const { return A_; }
  const Eigen::VectorXd &b() const { return b_; }
  const Eigen::VectorXd &b0() const { return b0_; }
  const Eigen::VectorXd &a0_raw() const { return a0_raw_; }
  double log_beta() const { return log_beta_; }

  Eigen::MatrixXd &A() { return A_; }
  Eigen::VectorXd &b() { return b_; }
  Eigen::VectorXd &b0() { return b0_; }

  void set_beta(double beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("GradientNetwork: beta must be positive");
    log_beta_ = std::log(beta);
  }
  void set_log_beta(double v) { log_beta_ = v; }
  void set_a0_raw(const Eigen::VectorXd &raw) {
    check_dim(raw, "A0 raw");
    a0_raw_ = raw;
    for (int j = 0; j < d_; ++j) {
      if (!a0_free(j)) a0_raw_[j] = 0.0;
    }
  }

  // Effective diagonal of A0.
  Eigen::VectorXd a0_diag() const {
    Eigen::VectorXd a(d_);
    for (int j = 0; j < d_; ++j) {
      a[j] = a0_free(j) ? mu_floor_ + detail::softplus(a0_raw_[j]) : 0.0;
    }
    return a;
  }

  // Sets the free diagonal entries of A0; each must exceed the mu floor.
  void set_a0_diag(const Eigen::VectorXd &diag) {
    check_dim(diag, "A0 diagonal");
    for (int j = 0; j < d_; ++j) {
      if (!a0_free(j)) {
        if (diag[j] != 0.0) {
          throw std::invalid_argument("GradientNetwork: angle-feature entries of A0 are pinned to 0");
        }
        a0_raw_[j] = 0.0;
        continue;
      }
      if (!(diag[j] > mu_floor_)) {
        throw std::invalid_argument("GradientNetwork: A0 entry must exceed the mu floor");
      }
      a0_raw_[j] = detail::softplus_inverse(diag[j] - mu_floor_);
    }
  }

  Eigen::VectorXd forward(const Eigen::VectorXd &x) const {
    check_dim(x, "input");
    const ActivationState act(activation(), A_ * x + b_);
    return a0_diag().cwiseProduct(x) + b0_ + A_.transpose() * act.value();
  }

  // A0 + A^T J_sigma A.
  Eigen::MatrixXd input_jacobian(const Eigen::VectorXd &x) const {
    check_dim(x, "input");
    const ActivationState act(activation(), A_ * x + b_);
    Eigen::MatrixXd jac = A_.transpose() * act.jacobian() * A_;
    jac.diagonal() += a0_diag();
    return jac;
  }

  // Gradient of <upstream, g(x)> with respect to all parameters.
  ParamGrad param_grad(const Eigen::VectorXd &x, const Eigen::VectorXd &upstream) const {
    ParamGrad grad = ParamGrad::zeros(d_, n_);
    accumulate_param_grad(x, upstream, grad);
    return grad;
  }

  void accumulate_param_grad(const Eigen::VectorXd &x, const Eigen::VectorXd &upstream,
                             ParamGrad &grad) const {
    check_dim(x, "input");
    check_dim(upstream, "upstream");
    const ActivationKind kind = activation();
    const ActivationState act(kind, A_ * x + b_);
    const Eigen::VectorXd w = A_ * upstream;
    const Eigen::VectorXd v = act.apply_jacobian(w);
    grad.A.noalias() += act.value() * upstream.transpose();
    grad.A.noalias() += v * x.transpose();
    grad.b += v;
    for (int j = 0; j < d_; ++j) {
      if (a0_free(j)) grad.a0_raw[j] += upstream[j] * x[j] * detail::logistic(a0_raw_[j]);
    }
    grad.b0 += upstream;
    grad.log_beta += kind.beta * w.dot(act.beta_grad());
  }

  // Free scalars: A, b, the free A0 entries, b0 and log beta.
  int parameter_count() const { return d_ * n_ + n_ + 2 + d_ + 1; }

  // Flat parameter vector in the order A (row-major), b, free A0 raw, b0,
  // log beta. pack(), unpack() and flatten(ParamGrad) share this layout.
  Eigen::VectorXd pack() const {
    Eigen::VectorXd v(parameter_count());
    write_flat(A_, b_, a0_raw_, b0_, log_beta_, v);
    return v;
  }

  void unpack(const Eigen::VectorXd &v) {
    if (v.size() != parameter_count()) {
      throw std::invalid_argument("GradientNetwork::unpack: expected " +
                                  std::to_string(parameter_count()) + " values");
    }
    Eigen::Index k = 0;
    for (int i = 0; i < n_; ++i) {
      for (int j = 0; j < d_; ++j) A_(i, j) = v[k++];
    }
    for (int i = 0; i < n_; ++i) b_[i] = v[k++];
    for (int j = 0; j < d_; ++j) a0_raw_[j] = a0_free(j) ? v[k++] : 0.0;
    for (int j = 0; j < d_; ++j) b0_[j] = v[k++];
    log_beta_ = v[k++];
  }

  Eigen::VectorXd flatten(const ParamGrad &g) const {
    Eigen::VectorXd v(parameter_count());
    write_flat(g.A, g.b, g.a0_raw, g.b0, g.log_beta, v);
    return v;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["D"] = d_;
    j["N"] = n_;
    j["activation"] = std::string(to_string(type_));
    j["p"] = p_;
    j["beta"] = std::exp(log_beta_);
    j["log_beta"] = log_beta_;
    j["mu_floor"] = mu_floor_;
    std::vector<std::vector<double>> rows(n_, std::vector<double>(d_));
    for (int i = 0; i < n_; ++i) {
      for (int k = 0; k < d_; ++k) rows[i][k] = A_(i, k);
    }
    j["A"] = rows;
    j["b"] = std::vector<double>(b_.data(), b_.data() + n_);
    const Eigen::VectorXd diag = a0_diag();
    j["A0_diag"] = std::vector<double>(diag.data(), diag.data() + d_);
    j["A0_raw"] = std::vector<double>(a0_raw_.data(), a0_raw_.data() + d_);
    j["b0"] = std::vector<double>(b0_.data(), b0_.data() + d_);
    return j;
  }

  static GradientNetwork from_json(const nlohmann::json &j) {
    const auto field = [&j](const char *name) -> const nlohmann::json & {
      if (!j.contains(name)) {
        throw std::invalid_argument(std::string("model document: missing field '") + name + "'");
      }
      return j.at(name);
    };
    const std::string act_name = field("activation").get<std::string>();
    const auto act = parse_activation(act_name);
    if (!act) throw std::invalid_argument("model document: unknown activation '" + act_name + "'");
    const int d = field("D").get<int>();
    const int n = field("N").get<int>();
    GradientNetwork net(d, n, {*act, 1.0, field("p").get<int>()}, field("mu_floor").get<double>());
    net.log_beta_ = field("log_beta").get<double>();
    const auto rows = field("A").get<std::vector<std::vector<double>>>();
    if (rows.size() != std::size_t(n)) throw std::invalid_argument("model document: A has wrong row count");
    for (int i = 0; i < n; ++i) {
      if (rows[i].size() != std::size_t(d)) {
        throw std::invalid_argument("model document: A has wrong column count");
      }
      for (int k = 0; k < d; ++k) net.A_(i, k) = rows[i][k];
    }
    net.b_ = read_vector(field("b"), n, "b");
    net.set_a0_raw(read_vector(field("A0_raw"), d, "A0_raw"));
    net.b0_ = read_vector(field("b0"), d, "b0");
    (void)field("A0_diag");
    (void)field("beta");
    return net;
  }

 private:
  template <class M, class V>
  void write_flat(const M &a, const V &b, const V &a0, const V &b0, double lb,
                  Eigen::VectorXd &out) const {
    Eigen::Index k = 0;
    for (int i = 0; i < n_; ++i) {
      for (int j = 0; j < d_; ++j) out[k++] = a(i, j);
    }
    for (int i = 0; i < n_; ++i) out[k++] = b[i];
    for (int j = 0; j < d_; ++j) {
      if (a0_free(j)) out[k++] = a0[j];
    }
    for (int j = 0; j < d_; ++j) out[k++] = b0[j];
    out[k++] = lb;
  }

  static Eigen::VectorXd read_vector(const nlohmann::json &j, int size, const char *name) {
    const auto v = j.get<std::vector<double>>();
    if (v.size() != std::size_t(size)) {
      throw std::invalid_argument(std::string("model document: field '") + name +
                                  "' has wrong length");
    }
    return Eigen::Map<const Eigen::VectorXd>(v.data(), size);
  }

  void check_dim(const Eigen::VectorXd &v, const char *what) const {
    if (v.size() != d_) {
      throw std::invalid_argument(std::string("GradientNetwork: ") + what + " has dimension " +
                                  std::to_string(v.size()) + ", expected " + std::to_string(d_));
    }
  }

  int d_ = 2;
  int n_ = 1;
  Activation type_ = Activation::PNormGradient;
  int p_ = 8;
  double mu_floor_ = kDefaultMuFloor;
  double log_beta_ = 0.0;
  Eigen::MatrixXd A_;
  Eigen::VectorXd b_;
  Eigen::VectorXd a0_raw_;
  Eigen::VectorXd b0_;
};

}  // namespace gradmag
