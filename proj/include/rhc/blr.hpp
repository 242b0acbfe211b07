#pragma once

// Multi-output Bayesian linear regression with a shared weight covariance.
//
// The belief is stored in information form: the precision matrix Sigma^{-1}
// accumulates additively under new data, and every quantity that needs Sigma
// (posterior mean, predictive variance, log det) goes through a Cholesky
// factorization of the precision.

#include <iosfwd>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "rhc/error.hpp"

namespace rhc {

/// Rows of features (N x m) and targets (N x d).
struct Dataset {
  Eigen::MatrixXd features;
  Eigen::MatrixXd targets;

  Eigen::Index size() const { return features.rows(); }
};

struct GaussianBelief {
  Eigen::MatrixXd mean;       // m x d, one weight column per output
  Eigen::MatrixXd precision;  // m x m, shared by all outputs
  double beta = 1.0;          // observation noise precision

  int num_features() const { return static_cast<int>(mean.rows()); }
  int output_dim() const { return static_cast<int>(mean.cols()); }

  /// Zero-mean prior with covariance alpha^{-1} I.
  static GaussianBelief prior(int num_features, int output_dim, double alpha, double beta);
};

/// Cholesky factor of a precision matrix. A jitter of 1e-8 I is added when
/// the matrix is numerically close to singular (condition estimate > 1e12)
/// or the plain factorization fails.
class PrecisionFactor {
 public:
  explicit PrecisionFactor(const Eigen::MatrixXd& precision);

  /// Sigma * rhs.
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const { return llt_.solve(rhs); }
  /// phi^T Sigma phi.
  double quadratic(const Eigen::VectorXd& phi) const;
  /// ln det Sigma = -ln det(precision).
  double log_det_covariance() const;
  bool jittered() const { return jittered_; }

 private:
  Eigen::LLT<Eigen::MatrixXd> llt_;
  bool jittered_ = false;
};

/// Incremental update: precision* = precision + beta Phi^T Phi and, per output
/// column, mu* = Sigma* (precision mu + beta Phi^T Y).
GaussianBelief posterior_update(const GaussianBelief& prior, const Dataset& batch);

struct Prediction {
  Eigen::VectorXd mean;  // d
  double variance = 0.0;  // shared across outputs, >= 1 / beta
};

/// Predictive distribution; factors the precision on every call. Use
/// Predictor to amortize the factorization across many queries.
Prediction predict(const GaussianBelief& belief, const Eigen::VectorXd& phi);

class Predictor {
 public:
  explicit Predictor(const GaussianBelief& belief);

  Prediction predict(const Eigen::VectorXd& phi) const;
  double log_likelihood(const Eigen::VectorXd& phi, const Eigen::VectorXd& y) const;

 private:
  Eigen::MatrixXd mean_;
  double beta_;
  PrecisionFactor factor_;
};

/// Entropy of the weight posterior summed over the d output columns:
/// d * (0.5 ln det Sigma + m/2 ln(2 pi e)).
double entropy(const GaussianBelief& belief);

/// Sum over outputs of ln N(y_k | mean_k, variance).
double log_likelihood(const GaussianBelief& belief, const Eigen::VectorXd& phi,
                      const Eigen::VectorXd& y);

/// Log marginal likelihood of the data under the prior N(0, alpha^{-1} I)
/// and noise precision beta, summed over output columns.
double log_evidence(const Dataset& data, double alpha, double beta);

struct BetaSearch {
  double log10_low = -2.0;
  double log10_high = 12.0;
  int iterations = 60;
};

/// Golden-section search over log10(beta) maximizing the mean held-out
/// log-likelihood of a posterior fit on `train` under prior alpha.
double fit_beta(const Dataset& train, const Dataset& holdout, double alpha,
                const BetaSearch& search = {});

void check_dataset(const Dataset& data, int num_features, int output_dim);

}  // namespace rhc
