// Activation families for monotone gradient networks.
//
// Every activation here is the gradient of a convex scalar function, so its
// Jacobian with respect to the pre-activation is symmetric positive
// semidefinite. Elementwise kinds have diagonal Jacobians; the vector kinds
// (softmax, p-norm gradient) couple all hidden units.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gradmag {

enum class Activation { Squareplus, AlgebraicSigmoid, Softmax, PNormGradient };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Squareplus: return "squareplus";
    case Activation::AlgebraicSigmoid: return "sigmoid";
    case Activation::Softmax: return "softmax";
    case Activation::PNormGradient: return "pnorm";
  }
  return "unknown";
}

inline std::optional<Activation> parse_activation(std::string_view s) {
  if (s == "squareplus") return Activation::Squareplus;
  if (s == "sigmoid" || s == "algebraic-sigmoid") return Activation::AlgebraicSigmoid;
  if (s == "softmax") return Activation::Softmax;
  if (s == "pnorm" || s == "pnorm-gradient") return Activation::PNormGradient;
  return std::nullopt;
}

struct ActivationKind {
  Activation type = Activation::PNormGradient;
  double beta = 1.0;
  int p = 8;  // PNormGradient only

  void validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) {
      throw std::invalid_argument("activation: beta must be positive and finite, got " +
                                  std::to_string(beta));
    }
    if (type == Activation::PNormGradient && (p < 2 || p % 2 != 0)) {
      throw std::invalid_argument("activation: p must be an even integer >= 2, got " +
                                  std::to_string(p));
    }
  }
  bool elementwise() const {
    return type == Activation::Squareplus || type == Activation::AlgebraicSigmoid;
  }
};

namespace detail {

inline double ipow(double x, int n) {
  double r = 1.0;
  for (int k = 0; k < n; ++k) r *= x;
  return r;
}

}  // namespace detail

// Activation evaluated at one pre-activation vector, keeping the intermediate
// quantities needed for Jacobian products and the beta derivative. The single
// fractional power of the p-norm gradient is taken once, here.
class ActivationState {
 public:
  ActivationState(const ActivationKind &kind, const Eigen::VectorXd &z) : kind_(kind), z_(z) {
    kind_.validate();
    const Eigen::Index n = z.size();
    value_.resize(n);
    aux_.resize(n);
    const double beta = kind_.beta;
    switch (kind_.type) {
      case Activation::Squareplus:
      case Activation::AlgebraicSigmoid:
        for (Eigen::Index i = 0; i < n; ++i) {
          const double r = std::sqrt(z[i] * z[i] + beta);
          aux_[i] = r;
          if (kind_.type == Activation::Squareplus) {
            // z + r cancels for large negative z; use beta / (2 (r - z)) there.
            value_[i] = z[i] >= 0.0 ? 0.5 * (z[i] + r) : 0.5 * beta / (r - z[i]);
          } else {
            value_[i] = z[i] / r;
          }
        }
        break;
      case Activation::Softmax: {
        const double m = (beta * z).maxCoeff();
        double sum = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          value_[i] = std::exp(beta * z[i] - m);
          sum += value_[i];
        }
        value_ /= sum;
        break;
      }
      case Activation::PNormGradient: {
        const int p = kind_.p;
        double s = 1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double y = beta * z[i];
          const double ypm2 = detail::ipow(y, p - 2);
          aux_[i] = ypm2;
          value_[i] = ypm2 * y;  // y^(p-1)
          s += value_[i] * y;
        }
        root_ = std::pow(s, 1.0 / p);
        scale_ = root_ / s;  // s^(-(p-1)/p)
        value_ *= scale_;
        break;
      }
    }
  }

  const Eigen::VectorXd &value() const { return value_; }

  // J_sigma w without forming J_sigma.
  Eigen::VectorXd apply_jacobian(const Eigen::VectorXd &w) const {
    const double beta = kind_.beta;
    switch (kind_.type) {
      case Activation::Squareplus:
      case Activation::AlgebraicSigmoid:
        return diagonal_derivative().cwiseProduct(w);
      case Activation::Softmax:
        return beta * (value_.cwiseProduct(w) - value_ * value_.dot(w));
      case Activation::PNormGradient:
        return beta * (kind_.p - 1) *
               (scale_ * aux_.cwiseProduct(w) - value_ * (value_.dot(w) / root_));
    }
    return {};
  }

  Eigen::MatrixXd jacobian() const {
    const double beta = kind_.beta;
    switch (kind_.type) {
      case Activation::Squareplus:
      case Activation::AlgebraicSigmoid:
        return diagonal_derivative().asDiagonal();
      case Activation::Softmax: {
        Eigen::MatrixXd jac = -value_ * value_.transpose();
        jac.diagonal() += value_;
        return beta * jac;
      }
      case Activation::PNormGradient: {
        Eigen::MatrixXd jac = -(value_ * value_.transpose()) / root_;
        jac.diagonal() += scale_ * aux_;
        return beta * (kind_.p - 1) * jac;
      }
    }
    return {};
  }

  // d sigma / d beta.
  Eigen::VectorXd beta_grad() const {
    const Eigen::Index n = z_.size();
    Eigen::VectorXd g(n);
    switch (kind_.type) {
      case Activation::Squareplus:
        for (Eigen::Index i = 0; i < n; ++i) g[i] = 0.25 / aux_[i];
        break;
      case Activation::AlgebraicSigmoid:
        for (Eigen::Index i = 0; i < n; ++i) g[i] = -0.5 * z_[i] / (aux_[i] * aux_[i] * aux_[i]);
        break;
      case Activation::Softmax:
        g = value_.cwiseProduct((z_.array() - value_.dot(z_)).matrix());
        break;
      case Activation::PNormGradient:
        // sigma is a function of beta z, so d sigma / d beta = J_sigma z / beta.
        g = (kind_.p - 1) * (scale_ * aux_.cwiseProduct(z_) - value_ * (value_.dot(z_) / root_));
        break;
    }
    return g;
  }

 private:
  Eigen::VectorXd diagonal_derivative() const {
    const Eigen::Index n = z_.size();
    Eigen::VectorXd d(n);
    const double beta = kind_.beta;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = aux_[i];
      d[i] = kind_.type == Activation::Squareplus ? 0.5 * (1.0 + z_[i] / r) : beta / (r * r * r);
    }
    return d;
  }

  ActivationKind kind_;
  Eigen::VectorXd z_;
  Eigen::VectorXd value_;
  Eigen::VectorXd aux_;  // sqrt(z^2 + beta) or (beta z)^(p-2)
  double root_ = 1.0;    // p-norm: s^(1/p)
  double scale_ = 1.0;   // p-norm: s^(-(p-1)/p)
};

inline Eigen::VectorXd activate(const ActivationKind &kind, const Eigen::VectorXd &z) {
  return ActivationState(kind, z).value();
}

inline Eigen::MatrixXd activation_jacobian(const ActivationKind &kind, const Eigen::VectorXd &z) {
  return ActivationState(kind, z).jacobian();
}

inline Eigen::VectorXd activation_beta_grad(const ActivationKind &kind,
                                            const Eigen::VectorXd &z) {
  return ActivationState(kind, z).beta_grad();
}

}  // namespace gradmag
