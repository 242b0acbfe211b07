#pragma once

// Model-quality and task-performance metrics.

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "rhc/envs.hpp"
#include "rhc/explorer.hpp"
#include "rhc/model.hpp"
#include "rhc/trajopt.hpp"

namespace rhc {

/// `num_traj` random trajectories of `length` steps each, from uniform start
/// states in the environment's sampling box with uniform actions. Starts whose
/// rollout leaves the simulator bounds are redrawn, so the result always has
/// num_traj * length transitions.
TransitionSet generate_test_set(const EnvSpec& env, int num_traj, int length, std::uint64_t seed);

/// Single-step transitions from uniformly sampled states and actions.
TransitionSet sample_uniform_transitions(const EnvSpec& env, int num_samples, std::uint64_t seed);

struct OracleOptions {
  int num_samples = 10000;
  std::uint64_t sample_seed = 0;
};

/// Model of the exploration model class fitted on dense uniform samples: the
/// same feature count, prior, target mode and feature-map seed as the run
/// with seed `run_seed`, bandwidth and noise fitted on the samples.
DynamicsModel oracle_model(const EnvSpec& env, const ExplorerOptions& model_options,
                           std::uint64_t run_seed, const OracleOptions& oracle = {});

/// Mean over transitions of the predictive log-likelihood of the next observation.
double mean_log_likelihood(const DynamicsModel& model, const TransitionSet& test_set);

struct DownstreamOptions {
  int horizon = 0;   // 0: episode length
  int restarts = 2;  // extra solves from small random initial actions
  double restart_scale = 0.1;  // fraction of the action half range
  std::uint64_t seed = 0;
  SolverOptions solver;
};

struct DownstreamResult {
  double cost = 0.0;            // on the true system
  double predicted_cost = 0.0;  // of the chosen plan under the model
  bool converged = false;
  Trajectory trajectory;
};

/// Plans the task under the learned mean dynamics and executes the plan
/// open-loop on the true system. The cost counts every observation of the
/// episode, the last one with zero action; an episode that ends early is
/// charged the final observation's cost for each missing step.
DownstreamResult downstream_cost(const DynamicsModel& model, const EnvSpec& env,
                                 const DownstreamOptions& options = {});

/// Episode cost of an executed trajectory under the convention above.
double episode_cost(const EnvSpec& env, const Trajectory& traj);

/// Linear-interpolation (type 7) quantile, q in [0, 1].
double quantile(std::vector<double> values, double q);
/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

/// 1-based index of the first value >= threshold, or 0 when never reached.
int episodes_to_threshold(const std::vector<double>& values, double threshold);

}  // namespace rhc
