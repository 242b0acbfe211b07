#pragma once

// Episodic receding-horizon exploration and the uniform-random baseline.
//
// Each episode plans an action sequence under the current model, executes it
// open-loop from the environment's reset state and then updates the model
// with the observed transitions.

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "rhc/acquisition.hpp"
#include "rhc/envs.hpp"
#include "rhc/model.hpp"
#include "rhc/trajopt.hpp"

namespace rhc {

struct Trajectory {
  Eigen::MatrixXd observations;  // (L + 1) x n
  Eigen::MatrixXd actions;       // L x k, as applied after clipping
  std::vector<bool> planned;     // L, action came from a planner
  Eigen::VectorXd divergence;    // L, |executed - planned|_inf; NaN without a plan
  int clip_count = 0;
  bool terminated_early = false;  // hit an environment bound before episode_len

  int steps() const { return static_cast<int>(actions.rows()); }
  TransitionSet transitions() const;
};

/// Executes `actions` from the reset state until the sequence ends or the
/// environment terminates. `planned_states` (row t predicting observation
/// t + 1) is used for divergence tracking when given.
Trajectory execute_open_loop(const EnvSpec& env, const Eigen::MatrixXd& actions,
                             const Eigen::MatrixXd* planned_states = nullptr);

enum class BandwidthMode { Heuristic, Evidence };

struct ExplorerOptions {
  ObjectiveKind objective = ObjectiveKind::UncertaintySampling;
  StepWeighting weighting = StepWeighting::Uniform;
  int num_features = 0;  // required
  double alpha = 1.0;
  double initial_beta = 100.0;      // noise precision before any data
  std::optional<double> fixed_beta;  // skips the held-out fit
  bool refit_beta = true;            // false: fit once after the first episode, then frozen
  double holdout_fraction = 0.2;
  int holdout_block = 10;  // contiguous transitions per held-out block
  // Hold out the newest episode instead of random blocks once earlier
  // episodes exist. Exploration drives each episode into new territory, so
  // this measures how the model extrapolates rather than interpolates.
  bool holdout_latest_episode = true;
  BandwidthMode bandwidth_mode = BandwidthMode::Evidence;
  bool refit_bandwidth = true;  // false: fit once after the first episode
  double initial_bandwidth = 1.0;        // before any data, in units of the input scale
  double bandwidth_floor = 1e-3;         // replaces zero components
  double bandwidth_scale_floor = 0.1;    // lower bound in units of the input scale
  TargetMode target = TargetMode::Delta;
  int horizon = 0;          // 0: episode length
  int replan_interval = 0;  // 0: open-loop for the whole episode
  bool warm_start = false;  // offer the previous episode's plan as an initialization
  int init_candidates = 8;  // random action sequences scored before each solve
  SolverOptions solver;
};

struct EpisodeStats {
  SolveStats solve;   // last solve of the episode (zero for random episodes)
  int solves = 0;
  int unconverged_solves = 0;
  double wall_time_s = 0.0;
};

struct ExplorationRun {
  std::uint64_t seed = 0;
  std::vector<Trajectory> episodes;
  std::vector<Eigen::MatrixXd> plans;  // planned action sequence per episode (empty for RAND)
  std::vector<DynamicsModel> models;   // model after each episode
  std::vector<EpisodeStats> stats;
  TransitionSet data;

  int num_episodes() const { return static_cast<int>(episodes.size()); }
};

/// Called after every finished episode with its 0-based index.
using EpisodeCallback = std::function<void(int episode, const ExplorationRun& run)>;

/// Average-pairwise-distance bandwidth of `inputs`, bounded below by
/// bandwidth_scale_floor times the environment's input scale.
Eigen::VectorXd data_bandwidth(const EnvSpec& env, const ExplorerOptions& options,
                               const Eigen::MatrixXd& inputs);

struct Hyperparameters {
  FeatureMap features;
  double beta = 1.0;
};

/// Bandwidth and noise precision for `data`. The bandwidth is refit when
/// `refit_bandwidth` is set; the noise precision is refit unless `keep_beta`
/// holds a value. In evidence mode the noise precision is refit again after
/// the bandwidth search so that both match.
/// Rows from `holdout_from` on form the held-out set when it is positive and
/// holdout_latest_episode is set; otherwise random blocks are held out.
Hyperparameters fit_hyperparameters(const EnvSpec& env, const ExplorerOptions& options,
                                    const FeatureMap& map, const TransitionSet& data,
                                    bool refit_bandwidth, std::optional<double> keep_beta,
                                    std::uint64_t split_seed, Eigen::Index holdout_from = 0);

/// Model used before any data: zero-mean prior over a feature map with the
/// initial bandwidth.
DynamicsModel initial_model(const EnvSpec& env, const ExplorerOptions& options,
                            std::uint64_t seed);

/// Model after adding `episode` to `run.data` (already appended), following
/// the bandwidth, noise and refit policy of `options`.
DynamicsModel update_model(const EnvSpec& env, const ExplorerOptions& options,
                           const ExplorationRun& run, const DynamicsModel& current,
                           const TransitionSet& episode, std::uint64_t seed);

/// Receding-horizon exploration. When `resume` holds earlier episodes of the
/// same configuration and seed, exploration continues after them.
ExplorationRun run_rhc(const EnvSpec& env, const ExplorerOptions& options, int episodes,
                       std::uint64_t seed, const EpisodeCallback& on_episode = {},
                       std::optional<ExplorationRun> resume = std::nullopt);

/// Uniformly random actions within bounds; same model-update protocol.
ExplorationRun run_random(const EnvSpec& env, const ExplorerOptions& options, int episodes,
                          std::uint64_t seed, const EpisodeCallback& on_episode = {},
                          std::optional<ExplorationRun> resume = std::nullopt);

/// Action sequence of i.i.d. uniform draws within the environment bounds.
Eigen::MatrixXd sample_uniform_actions(const EnvSpec& env, int steps, std::uint64_t seed);

/// Seed of the feature map used by the run with seed `seed`.
std::uint64_t feature_seed(std::uint64_t seed);

/// Seed for a named sub-stream of a run (episodes, splits, features).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

}  // namespace rhc
