// Test-only reference computations. Nothing here calls into the code paths it
// is used to check: finite differences, a loop-based re-implementation of the
// network, and a fixed composite Gauss rule with hard-coded nodes.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "gradmag/activation.hpp"

namespace oracle {

// Step used by every finite-difference oracle: h = 1e-5 (1 + |x|).
inline double fd_step(double x) { return 1e-5 * (1.0 + std::abs(x)); }

// Central difference of a vector function along coordinate j.
inline Eigen::VectorXd central_diff(const std::function<Eigen::VectorXd(const Eigen::VectorXd &)> &f,
                                    const Eigen::VectorXd &x, int j) {
  const double h = fd_step(x[j]);
  Eigen::VectorXd xp = x, xm = x;
  xp[j] += h;
  xm[j] -= h;
  return (f(xp) - f(xm)) / (2.0 * h);
}

inline Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd &)> &f,
                                   const Eigen::VectorXd &x) {
  const Eigen::VectorXd y = f(x);
  Eigen::MatrixXd jac(y.size(), x.size());
  for (int j = 0; j < x.size(); ++j) jac.col(j) = central_diff(f, x, j);
  return jac;
}

inline double fd_scalar(const std::function<double(double)> &f, double x) {
  const double h = fd_step(x);
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Fourth-order central difference; used where truncation must stay far below
// the asserted tolerance.
inline double fd5_scalar(const std::function<double(double)> &f, double x, double h) {
  return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12.0 * h);
}

// Relative error with an absolute floor so that near-zero entries compare on
// an absolute scale.
inline double rel_err(double a, double b, double floor = 1e-3) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_rel_err(const Eigen::MatrixXd &a, const Eigen::MatrixXd &b, double floor = 1e-3) {
  const double scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), floor});
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

// Composite 3-point Gauss-Legendre with hard-coded nodes.
inline double composite_gauss3(const std::function<double(double)> &f, double a, double b,
                               int panels) {
  static const double x1 = std::sqrt(3.0 / 5.0);
  static const double w0 = 8.0 / 9.0, w1 = 5.0 / 9.0;
  const double h = (b - a) / panels;
  double sum = 0.0;
  for (int k = 0; k < panels; ++k) {
    const double m = a + (k + 0.5) * h;
    const double r = 0.5 * h;
    sum += r * (w0 * f(m) + w1 * f(m - r * x1) + w1 * f(m + r * x1));
  }
  return sum;
}

// n-point Gauss-Legendre on [a, b] with nodes from the Golub-Welsch
// eigenvalue problem.
inline double gauss_legendre(const std::function<double(double)> &f, double a, double b, int n) {
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double off = k / std::sqrt(4.0 * k * k - 1.0);
    jacobi(k, k - 1) = off;
    jacobi(k - 1, k) = off;
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  double sum = 0.0;
  for (int k = 0; k < n; ++k) {
    const double x = es.eigenvalues()[k];
    const double w = 2.0 * es.eigenvectors()(0, k) * es.eigenvectors()(0, k);
    sum += w * f(0.5 * (a + b) + 0.5 * (b - a) * x);
  }
  return 0.5 * (b - a) * sum;
}

// Loop-based activation, independent of ActivationState.
inline std::vector<double> naive_activation(gradmag::Activation type, double beta, int p,
                                            const std::vector<double> &z) {
  const std::size_t n = z.size();
  std::vector<double> out(n);
  switch (type) {
    case gradmag::Activation::Squareplus:
      for (std::size_t i = 0; i < n; ++i) out[i] = 0.5 * (z[i] + std::sqrt(z[i] * z[i] + beta));
      break;
    case gradmag::Activation::AlgebraicSigmoid:
      for (std::size_t i = 0; i < n; ++i) out[i] = z[i] / std::sqrt(z[i] * z[i] + beta);
      break;
    case gradmag::Activation::Softmax: {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) sum += std::exp(beta * z[i]);
      for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(beta * z[i]) / sum;
      break;
    }
    case gradmag::Activation::PNormGradient: {
      double s = 1.0;
      for (std::size_t i = 0; i < n; ++i) s += std::pow(beta * z[i], p);
      const double den = std::pow(s, double(p - 1) / p);
      for (std::size_t i = 0; i < n; ++i) out[i] = std::pow(beta * z[i], p - 1) / den;
      break;
    }
  }
  return out;
}

// Smooth p-norm S(z) = [1 + sum (beta z)^p]^(1/p) / beta and log-sum-exp,
// the potentials of the vector activations.
inline double smooth_pnorm(double beta, int p, const Eigen::VectorXd &z) {
  double s = 1.0;
  for (int i = 0; i < z.size(); ++i) s += std::pow(beta * z[i], p);
  return std::pow(s, 1.0 / p) / beta;
}

inline std::vector<gradmag::Activation> all_activations() {
  return {gradmag::Activation::Squareplus, gradmag::Activation::AlgebraicSigmoid,
          gradmag::Activation::Softmax, gradmag::Activation::PNormGradient};
}

inline Eigen::VectorXd random_vector(std::mt19937_64 &rng, int n, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

inline double uniform(std::mt19937_64 &rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace oracle
