#pragma once

// Learned forward model: random Fourier features of [obs; action] followed by
// Bayesian linear regression on either the state difference s' - s (delta
// mode, the default) or the next observation itself.

#include <cstdint>
#include <iosfwd>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "rhc/blr.hpp"
#include "rhc/rff.hpp"
#include "rhc/types.hpp"

namespace rhc {

enum class TargetMode { Delta, Absolute };

std::string_view target_mode_name(TargetMode mode);
TargetMode parse_target_mode(std::string_view name);

/// Row-aligned single-step transitions.
struct TransitionSet {
  Eigen::MatrixXd observations;       // N x n
  Eigen::MatrixXd actions;            // N x k
  Eigen::MatrixXd next_observations;  // N x n

  Eigen::Index size() const { return observations.rows(); }
  /// Regression inputs [obs, action], N x (n + k).
  Eigen::MatrixXd inputs() const;
  void append(const TransitionSet& other);
  TransitionSet subset(const std::vector<Eigen::Index>& rows) const;
};

struct DynamicsModel {
  FeatureMap features;
  GaussianBelief belief;
  TargetMode target = TargetMode::Delta;

  int obs_dim() const { return belief.output_dim(); }
  int action_dim() const { return features.input_dim() - belief.output_dim(); }

  /// Regression target for one transition.
  Eigen::VectorXd target_of(const Eigen::VectorXd& obs, const Eigen::VectorXd& next_obs) const;

  /// Mean next observation E[s' | s, a].
  template <class S>
  Vec<S> mean_next(const Vec<S>& s, const Vec<S>& a) const {
    const int n = static_cast<int>(s.size());
    Vec<S> x(n + a.size());
    for (int j = 0; j < n; ++j) x[j] = s[j];
    for (int j = 0; j < a.size(); ++j) x[n + j] = a[j];
    const Vec<S> phi = featurize<S>(features, x);
    const Eigen::MatrixXd& w = belief.mean;
    Vec<S> out(w.cols());
    for (Eigen::Index k = 0; k < w.cols(); ++k) {
      S acc(0.0);
      for (Eigen::Index i = 0; i < w.rows(); ++i) acc += w(i, k) * phi[i];
      out[k] = target == TargetMode::Delta ? acc + s[k] : acc;
    }
    return out;
  }
};

Dataset make_dataset(const FeatureMap& map, const TransitionSet& data, TargetMode target);

/// Posterior over all of `data` starting from the N(0, alpha^{-1} I) prior.
DynamicsModel fit_model(const FeatureMap& map, const TransitionSet& data, TargetMode target,
                        double alpha, double beta);

/// Noise precision maximizing held-out log-likelihood on a seeded random
/// `holdout_fraction` of `data`. Rows are held out in contiguous blocks of
/// `block` transitions, so that neighbours of a held-out transition along a
/// trajectory do not leak into the training split.
double fit_noise_precision(const FeatureMap& map, const TransitionSet& data, TargetMode target,
                           double alpha, double holdout_fraction, std::uint64_t seed,
                           int block = 1);

/// Noise precision maximizing the log-likelihood of `holdout` under a
/// posterior fitted on `train`.
double fit_noise_precision(const FeatureMap& map, const TransitionSet& train,
                           const TransitionSet& holdout, TargetMode target, double alpha);

/// Coordinate-wise search over a 7-point log grid spanning x1/8 .. x8 of the
/// starting bandwidth, maximizing the regression evidence.
Eigen::VectorXd fit_bandwidth_evidence(const FeatureMap& map, const TransitionSet& data,
                                       TargetMode target, double alpha, double beta);

/// Text snapshot: dimensions, feature-map seed, bandwidth, beta, target mode,
/// mean and precision. Projection and phases are regenerated from the seed.
void write_snapshot(std::ostream& out, const DynamicsModel& model);
DynamicsModel read_snapshot(std::istream& in);

}  // namespace rhc
