#include "rhc/blr.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

namespace rhc {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // ln(2 pi)
constexpr double kJitter = 1e-8;
constexpr double kMaxCondition = 1e12;

void check_belief(const GaussianBelief& b) {
  if (b.precision.rows() != b.mean.rows() || b.precision.cols() != b.mean.rows()) {
    throw InvalidInput("belief precision does not match the mean");
  }
  if (!(b.beta > 0.0) || !std::isfinite(b.beta)) throw InvalidInput("beta must be positive");
}

}  // namespace

GaussianBelief GaussianBelief::prior(int num_features, int output_dim, double alpha, double beta) {
  if (num_features < 1 || output_dim < 1) throw InvalidInput("belief dimensions must be positive");
  if (!(alpha > 0.0) || !(beta > 0.0)) throw InvalidInput("alpha and beta must be positive");
  GaussianBelief b;
  b.mean = Eigen::MatrixXd::Zero(num_features, output_dim);
  b.precision = alpha * Eigen::MatrixXd::Identity(num_features, num_features);
  b.beta = beta;
  return b;
}

PrecisionFactor::PrecisionFactor(const Eigen::MatrixXd& precision) {
  if (!precision.allFinite()) throw NumericalError("non-finite precision matrix");
  llt_.compute(precision);
  bool ok = llt_.info() == Eigen::Success;
  if (ok) {
    const Eigen::VectorXd diag = llt_.matrixLLT().diagonal();
    const double ratio = diag.maxCoeff() / diag.minCoeff();
    ok = diag.minCoeff() > 0.0 && ratio * ratio <= kMaxCondition;
  }
  if (!ok) {
    jittered_ = true;
    // Jitter relative to the largest diagonal entry, grown until the factor exists.
    const Eigen::Index n = precision.rows();
    const double scale = std::max(1.0, precision.diagonal().cwiseAbs().maxCoeff());
    for (double jitter = kJitter; jitter <= 1e-4; jitter *= 100.0) {
      llt_.compute(precision + jitter * scale * Eigen::MatrixXd::Identity(n, n));
      if (llt_.info() == Eigen::Success && llt_.matrixLLT().diagonal().minCoeff() > 0.0) return;
    }
    const Eigen::VectorXd d = precision.diagonal();
    throw NumericalError(fmt::format("precision factorization failed (diagonal range [{:.3g}, {:.3g}])",
                                     d.minCoeff(), d.maxCoeff()));
  }
}

double PrecisionFactor::quadratic(const Eigen::VectorXd& phi) const {
  // phi^T (L L^T)^{-1} phi = |L^{-1} phi|^2
  return llt_.matrixL().solve(phi).squaredNorm();
}

double PrecisionFactor::log_det_covariance() const {
  return -2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

void check_dataset(const Dataset& data, int num_features, int output_dim) {
  if (data.features.rows() != data.targets.rows()) {
    throw InvalidInput("dataset features and targets have different row counts");
  }
  if (data.features.rows() == 0) return;
  if (data.features.cols() != num_features || data.targets.cols() != output_dim) {
    throw InvalidInput(fmt::format("dataset is {}x{} / {}x{}, belief expects m={} d={}",
                                   data.features.rows(), data.features.cols(), data.targets.rows(),
                                   data.targets.cols(), num_features, output_dim));
  }
  if (!data.features.allFinite() || !data.targets.allFinite()) {
    throw InvalidInput("non-finite values in dataset");
  }
}

GaussianBelief posterior_update(const GaussianBelief& prior, const Dataset& batch) {
  check_belief(prior);
  check_dataset(batch, prior.num_features(), prior.output_dim());
  if (batch.size() == 0) return prior;

  GaussianBelief post;
  post.beta = prior.beta;
  post.precision = prior.precision;
  post.precision.selfadjointView<Eigen::Lower>().rankUpdate(batch.features.transpose(), prior.beta);
  post.precision.triangularView<Eigen::StrictlyUpper>() =
      post.precision.transpose().triangularView<Eigen::StrictlyUpper>();

  const Eigen::MatrixXd rhs =
      prior.precision * prior.mean + prior.beta * batch.features.transpose() * batch.targets;
  PrecisionFactor factor(post.precision);
  post.mean = factor.solve(rhs);
  if (!post.mean.allFinite()) throw NumericalError("non-finite posterior mean");
  return post;
}

Prediction predict(const GaussianBelief& belief, const Eigen::VectorXd& phi) {
  return Predictor(belief).predict(phi);
}

Predictor::Predictor(const GaussianBelief& belief)
    : mean_(belief.mean), beta_(belief.beta), factor_(belief.precision) {
  check_belief(belief);
}

Prediction Predictor::predict(const Eigen::VectorXd& phi) const {
  if (phi.size() != mean_.rows()) {
    throw InvalidInput(
        fmt::format("feature vector has length {}, expected {}", phi.size(), mean_.rows()));
  }
  if (!phi.allFinite()) throw InvalidInput("non-finite feature vector");
  Prediction p;
  p.mean = mean_.transpose() * phi;
  p.variance = 1.0 / beta_ + factor_.quadratic(phi);
  return p;
}

double Predictor::log_likelihood(const Eigen::VectorXd& phi, const Eigen::VectorXd& y) const {
  if (y.size() != mean_.cols()) {
    throw InvalidInput(fmt::format("target has length {}, expected {}", y.size(), mean_.cols()));
  }
  const Prediction p = predict(phi);
  const double d = static_cast<double>(y.size());
  return -0.5 * d * (kLog2Pi + std::log(p.variance)) -
         0.5 * (y - p.mean).squaredNorm() / p.variance;
}

double entropy(const GaussianBelief& belief) {
  check_belief(belief);
  const PrecisionFactor factor(belief.precision);
  const double m = belief.num_features();
  const double per_column = 0.5 * factor.log_det_covariance() + 0.5 * m * (kLog2Pi + 1.0);
  return belief.output_dim() * per_column;
}

double log_likelihood(const GaussianBelief& belief, const Eigen::VectorXd& phi,
                      const Eigen::VectorXd& y) {
  return Predictor(belief).log_likelihood(phi, y);
}

double log_evidence(const Dataset& data, double alpha, double beta) {
  const Eigen::Index n = data.size();
  const Eigen::Index m = data.features.cols();
  const Eigen::Index d = data.targets.cols();
  check_dataset(data, static_cast<int>(m), static_cast<int>(d));
  if (n == 0) return 0.0;

  // Bishop (3.86): per output column,
  // ln p(y) = m/2 ln a + N/2 ln b - E(mu) - 1/2 ln|A| - N/2 ln(2 pi),
  // A = a I + b Phi^T Phi, E(mu) = b/2 |y - Phi mu|^2 + a/2 |mu|^2.
  Eigen::MatrixXd a = alpha * Eigen::MatrixXd::Identity(m, m);
  a.selfadjointView<Eigen::Lower>().rankUpdate(data.features.transpose(), beta);
  a.triangularView<Eigen::StrictlyUpper>() = a.transpose().triangularView<Eigen::StrictlyUpper>();
  const PrecisionFactor factor(a);
  const Eigen::MatrixXd mu = beta * factor.solve(data.features.transpose() * data.targets);
  const Eigen::MatrixXd resid = data.targets - data.features * mu;

  const double log_det_a = -factor.log_det_covariance();
  double total = 0.0;
  for (Eigen::Index k = 0; k < d; ++k) {
    const double e = 0.5 * beta * resid.col(k).squaredNorm() + 0.5 * alpha * mu.col(k).squaredNorm();
    total += 0.5 * static_cast<double>(m) * std::log(alpha) +
             0.5 * static_cast<double>(n) * std::log(beta) - e - 0.5 * log_det_a -
             0.5 * static_cast<double>(n) * kLog2Pi;
  }
  return total;
}

double fit_beta(const Dataset& train, const Dataset& holdout, double alpha,
                const BetaSearch& search) {
  if (train.size() == 0 || holdout.size() == 0) {
    throw InsufficientData("beta fit needs non-empty training and held-out sets");
  }
  const int m = static_cast<int>(train.features.cols());
  const int d = static_cast<int>(train.targets.cols());
  check_dataset(holdout, m, d);

  check_dataset(train, m, d);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(m, m);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(train.features.transpose());
  gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose().triangularView<Eigen::StrictlyUpper>();
  const Eigen::MatrixXd cross = train.features.transpose() * train.targets;

  auto score = [&](double log10_beta) {
    GaussianBelief post;
    post.beta = std::pow(10.0, log10_beta);
    post.precision = alpha * Eigen::MatrixXd::Identity(m, m) + post.beta * gram;
    post.mean = PrecisionFactor(post.precision).solve(post.beta * cross);
    const Predictor predictor(post);
    double total = 0.0;
    for (Eigen::Index i = 0; i < holdout.size(); ++i) {
      total += predictor.log_likelihood(holdout.features.row(i).transpose(),
                                        holdout.targets.row(i).transpose());
    }
    return total / static_cast<double>(holdout.size());
  };

  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = search.log10_low;
  double hi = search.log10_high;
  double x1 = hi - ratio * (hi - lo);
  double x2 = lo + ratio * (hi - lo);
  double f1 = score(x1);
  double f2 = score(x2);
  for (int it = 0; it < search.iterations && hi - lo > 1e-6; ++it) {
    if (f1 >= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - ratio * (hi - lo);
      f1 = score(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + ratio * (hi - lo);
      f2 = score(x2);
    }
  }
  return std::pow(10.0, f1 >= f2 ? x1 : x2);
}

}  // namespace rhc
