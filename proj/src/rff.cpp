#include "rhc/rff.hpp"

#include <algorithm>
#include <numbers>
#include <random>
#include <vector>

#include <fmt/format.h>

namespace rhc {

namespace {

void check_bandwidth(const Eigen::VectorXd& bandwidth, int n) {
  if (bandwidth.size() != n) {
    throw InvalidInput(fmt::format("bandwidth has length {}, expected {}", bandwidth.size(), n));
  }
  if (!bandwidth.allFinite() || !(bandwidth.array() > 0.0).all()) {
    throw InvalidInput("bandwidth must be finite and strictly positive");
  }
}

}  // namespace

FeatureMap FeatureMap::with_bandwidth(const Eigen::VectorXd& nu) const {
  check_bandwidth(nu, input_dim());
  FeatureMap out = *this;
  out.bandwidth = nu;
  return out;
}

FeatureMap sample_feature_map(int input_dim, int num_features, const Eigen::VectorXd& bandwidth,
                              std::uint64_t seed) {
  if (input_dim < 1 || num_features < 1) {
    throw InvalidInput("feature map needs input_dim >= 1 and num_features >= 1");
  }
  check_bandwidth(bandwidth, input_dim);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(-std::numbers::pi, std::numbers::pi);

  FeatureMap map;
  map.seed = seed;
  map.bandwidth = bandwidth;
  map.proj.resize(num_features, input_dim);
  for (int i = 0; i < num_features; ++i) {
    for (int j = 0; j < input_dim; ++j) map.proj(i, j) = normal(rng);
  }
  map.phase.resize(num_features);
  for (int i = 0; i < num_features; ++i) map.phase[i] = uniform(rng);
  return map;
}

Eigen::VectorXd featurize(const FeatureMap& map, const Eigen::VectorXd& x) {
  if (x.size() != map.input_dim()) {
    throw InvalidInput(
        fmt::format("feature input has length {}, expected {}", x.size(), map.input_dim()));
  }
  if (!x.allFinite()) throw InvalidInput("non-finite feature input");
  return featurize<double>(map, x);
}

Eigen::MatrixXd feature_jacobian(const FeatureMap& map, const Eigen::VectorXd& x) {
  if (x.size() != map.input_dim()) throw InvalidInput("feature input dimension mismatch");
  const Eigen::VectorXd scaled = x.cwiseQuotient(map.bandwidth);
  const Eigen::ArrayXd arg = (map.proj * scaled + map.phase).array();
  return arg.cos().matrix().asDiagonal() * map.proj *
         map.bandwidth.cwiseInverse().asDiagonal();
}

Eigen::MatrixXd feature_matrix(const FeatureMap& map, const Eigen::MatrixXd& inputs) {
  if (inputs.cols() != map.input_dim()) throw InvalidInput("feature input dimension mismatch");
  if (!inputs.allFinite()) throw InvalidInput("non-finite feature input");
  const Eigen::MatrixXd scaled = inputs * map.bandwidth.cwiseInverse().asDiagonal();
  Eigen::MatrixXd arg = scaled * map.proj.transpose();
  arg.rowwise() += map.phase.transpose();
  return arg.array().sin().matrix();
}

Eigen::VectorXd fit_bandwidth(const Eigen::MatrixXd& inputs, double floor) {
  const Eigen::Index count = inputs.rows();
  if (count < 2) throw InsufficientData("bandwidth fit needs at least two inputs");
  if (!inputs.allFinite()) throw InvalidInput("non-finite bandwidth input");

  // With sorted values v_0 <= ... <= v_{N-1}, the sum of pairwise gaps is
  // sum_k v_k (2k - N + 1), so each dimension costs one sort.
  const double pairs = 0.5 * static_cast<double>(count) * static_cast<double>(count - 1);
  Eigen::VectorXd nu(inputs.cols());
  std::vector<double> column(static_cast<std::size_t>(count));
  for (Eigen::Index j = 0; j < inputs.cols(); ++j) {
    for (Eigen::Index k = 0; k < count; ++k) column[static_cast<std::size_t>(k)] = inputs(k, j);
    std::sort(column.begin(), column.end());
    double total = 0.0;
    for (Eigen::Index k = 0; k < count; ++k) {
      total += column[static_cast<std::size_t>(k)] * static_cast<double>(2 * k - count + 1);
    }
    const double mean = total / pairs;
    nu[j] = mean > 0.0 ? mean : floor;
  }
  return nu;
}

}  // namespace rhc
