#pragma once

// Random Fourier features: phi_i(x) = sin(sum_j P_ij x_j / nu_j + phase_i)
// with P_ij ~ N(0, 1) and phase_i ~ U[-pi, pi).

#include <cstdint>

#include <Eigen/Core>

#include "rhc/error.hpp"
#include "rhc/types.hpp"

namespace rhc {

struct FeatureMap {
  Eigen::MatrixXd proj;       // m x n
  Eigen::VectorXd phase;      // m
  Eigen::VectorXd bandwidth;  // n, strictly positive
  std::uint64_t seed = 0;

  int num_features() const { return static_cast<int>(proj.rows()); }
  int input_dim() const { return static_cast<int>(proj.cols()); }

  /// Same projection and phases with a different bandwidth.
  FeatureMap with_bandwidth(const Eigen::VectorXd& bandwidth) const;
};

/// Draws a frozen feature map; identical arguments give identical maps.
FeatureMap sample_feature_map(int input_dim, int num_features, const Eigen::VectorXd& bandwidth,
                              std::uint64_t seed);

template <class S>
Vec<S> featurize(const FeatureMap& map, const Vec<S>& x) {
  using std::sin;
  const int m = map.num_features();
  const int n = map.input_dim();
  Vec<S> scaled(n);
  for (int j = 0; j < n; ++j) scaled[j] = x[j] / map.bandwidth[j];
  Vec<S> phi(m);
  for (int i = 0; i < m; ++i) {
    S arg(map.phase[i]);
    for (int j = 0; j < n; ++j) arg += map.proj(i, j) * scaled[j];
    phi[i] = sin(arg);
  }
  return phi;
}

/// Checked double-precision feature vector.
Eigen::VectorXd featurize(const FeatureMap& map, const Eigen::VectorXd& x);

/// Analytic Jacobian d phi / d x (m x n): diag(cos(arg)) * P * diag(1 / nu).
Eigen::MatrixXd feature_jacobian(const FeatureMap& map, const Eigen::VectorXd& x);

/// Features of every row of `inputs` (N x n), returned as the N x m design matrix.
Eigen::MatrixXd feature_matrix(const FeatureMap& map, const Eigen::MatrixXd& inputs);

/// Per-dimension mean of |x_a - x_b| over all unordered pairs of rows.
/// Zero components are replaced by `floor`. Requires at least two rows.
Eigen::VectorXd fit_bandwidth(const Eigen::MatrixXd& inputs, double floor = 1e-3);

}  // namespace rhc
