#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <numbers>
#include <span>
#include <string>

#include "canon/error.hpp"

namespace canon {

/// Fitted zero-mean GP with an RBF kernel. Inputs are expected in the unit box;
/// targets are stored standardized and de-standardized on the way out.
struct GPState {
  Eigen::MatrixXd X;       // n x d
  Eigen::VectorXd y;       // standardized targets
  double y_mean = 0.0;
  double y_scale = 1.0;
  double lengthscale = 0.2;
  double signal_var = 1.0;
  double noise_var = 1e-6;
  double jitter = 0.0;     // extra diagonal added to make K factorizable
  Eigen::MatrixXd chol;    // lower factor of K + (noise_var + jitter) I
  Eigen::VectorXd weights; // (K + noise I)^-1 y

  int size() const { return static_cast<int>(X.rows()); }
  int dim() const { return static_cast<int>(X.cols()); }
};

struct Posterior {
  double mu = 0.0;
  double var = 0.0;
};

inline double rbf_kernel(std::span<const double> x1, std::span<const double> x2, double lengthscale,
                         double signal_var) {
  if (x1.size() != x2.size()) throw DimensionMismatch("rbf_kernel: points differ in dimension");
  if (!(lengthscale > 0.0)) throw ArgumentError("rbf_kernel: lengthscale must be > 0");
  double d2 = 0.0;
  for (std::size_t i = 0; i < x1.size(); ++i) d2 += (x1[i] - x2[i]) * (x1[i] - x2[i]);
  return signal_var * std::exp(-d2 / (2.0 * lengthscale * lengthscale));
}

namespace detail {

inline Eigen::MatrixXd rbf_gram(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double lengthscale,
                                double signal_var) {
  const Eigen::VectorXd a2 = A.rowwise().squaredNorm();
  const Eigen::VectorXd b2 = B.rowwise().squaredNorm();
  Eigen::MatrixXd d2 = (-2.0 * A * B.transpose()).colwise() + a2;
  d2.rowwise() += b2.transpose();
  const double inv = -1.0 / (2.0 * lengthscale * lengthscale);
  return (d2.array().max(0.0) * inv).exp() * signal_var;
}

}  // namespace detail

inline GPState gp_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lengthscale,
                      double signal_var, double noise_var) {
  const Eigen::Index n = X.rows();
  if (n < 1) throw ArgumentError("gp_fit needs at least one observation");
  if (y.size() != n) throw DimensionMismatch("gp_fit: X and y disagree on n");
  if (!(lengthscale > 0.0) || !(signal_var > 0.0) || noise_var < 0.0) {
    throw ArgumentError("gp_fit: invalid kernel hyperparameters");
  }

  GPState s;
  s.X = X;
  s.lengthscale = lengthscale;
  s.signal_var = signal_var;
  s.noise_var = noise_var;
  s.y_mean = y.mean();
  const double var = (y.array() - s.y_mean).square().mean();
  s.y_scale = var > 1e-24 ? std::sqrt(var) : 1.0;
  s.y = (y.array() - s.y_mean) / s.y_scale;

  Eigen::MatrixXd K = detail::rbf_gram(X, X, lengthscale, signal_var);
  K.diagonal().array() += noise_var;

  // Factorize, adding jitter 1e-8, 2e-8, ... up to 1e-4 when the plain matrix
  // is not numerically positive definite.
  const double min_pivot = 1e-12 * signal_var;
  double jitter = 0.0;
  while (true) {
    Eigen::MatrixXd Kj = K;
    Kj.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(Kj);
    if (llt.info() == Eigen::Success) {
      Eigen::MatrixXd L = llt.matrixL();
      if (L.diagonal().array().square().minCoeff() > min_pivot) {
        s.chol = std::move(L);
        s.jitter = jitter;
        break;
      }
    }
    jitter = jitter == 0.0 ? 1e-8 : jitter * 2.0;
    if (jitter > 1e-4) {
      throw SingularKernel("kernel matrix not positive definite with jitter up to 1e-4 (n=" +
                           std::to_string(n) + ")");
    }
  }
  s.weights = s.chol.triangularView<Eigen::Lower>().solve(s.y);
  s.chol.triangularView<Eigen::Lower>().transpose().solveInPlace(s.weights);
  return s;
}

/// Posterior mean and variance at each row of `Xs`, on the original y scale.
inline void gp_posterior_batch(const GPState& state, const Eigen::MatrixXd& Xs, Eigen::VectorXd& mu,
                               Eigen::VectorXd& var) {
  const Eigen::MatrixXd Ks = detail::rbf_gram(state.X, Xs, state.lengthscale, state.signal_var);
  mu = (Ks.transpose() * state.weights).array() * state.y_scale + state.y_mean;
  const Eigen::MatrixXd V = state.chol.triangularView<Eigen::Lower>().solve(Ks);
  var = ((state.signal_var - V.colwise().squaredNorm().array()).max(0.0) * state.y_scale *
         state.y_scale)
            .matrix()
            .transpose();
}

inline Posterior gp_posterior(const GPState& state, std::span<const double> x) {
  if (static_cast<int>(x.size()) != state.dim()) {
    throw DimensionMismatch("gp_posterior: query dimension mismatch");
  }
  Eigen::MatrixXd q(1, state.dim());
  for (int i = 0; i < state.dim(); ++i) q(0, i) = x[i];
  Eigen::VectorXd mu, var;
  gp_posterior_batch(state, q, mu, var);
  return {mu(0), var(0)};
}

inline double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Expected improvement below the incumbent `best` (minimization).
inline double expected_improvement(double mu, double sigma, double best, double xi) {
  const double gain = best - mu - xi;
  if (!(sigma > 0.0)) return std::max(gain, 0.0);
  const double z = gain / sigma;
  return std::max(0.0, gain * normal_cdf(z) + sigma * normal_pdf(z));
}

}  // namespace canon
