#include "rhc/explorer.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "rhc/blr.hpp"
#include "rhc/rff.hpp"

namespace rhc {

namespace {

enum Stream : std::uint64_t { kFeatures = 1, kSplit = 2, kActions = 3, kInit = 4 };

// Step-by-step recorder for one episode.
class Executor {
 public:
  explicit Executor(const EnvSpec& env) : env_(env), state_(reset(env)) {
    observations_.push_back(observe(env_, state_));
  }

  bool done() const { return done_; }
  int steps() const { return static_cast<int>(actions_.size()); }
  Eigen::VectorXd observation() const { return observations_.back(); }

  void apply(const Eigen::VectorXd& action, const Eigen::VectorXd* predicted) {
    const StepResult r = step(env_, state_, action);
    state_ = r.state;
    actions_.push_back(action.cwiseMax(env_.action_low).cwiseMin(env_.action_high));
    observations_.push_back(observe(env_, state_));
    planned_.push_back(predicted != nullptr);
    divergence_.push_back(predicted != nullptr
                              ? (observations_.back() - *predicted).cwiseAbs().maxCoeff()
                              : std::numeric_limits<double>::quiet_NaN());
    if (r.terminated) {
      done_ = true;
      early_ = state_.step_count < env_.episode_len;
    }
  }

  Trajectory finish() const {
    Trajectory traj;
    traj.observations.resize(static_cast<Eigen::Index>(observations_.size()), env_.obs_dim);
    for (std::size_t i = 0; i < observations_.size(); ++i) {
      traj.observations.row(static_cast<Eigen::Index>(i)) = observations_[i].transpose();
    }
    traj.actions.resize(steps(), env_.action_dim);
    traj.divergence.resize(steps());
    for (int i = 0; i < steps(); ++i) {
      traj.actions.row(i) = actions_[static_cast<std::size_t>(i)].transpose();
      traj.divergence[i] = divergence_[static_cast<std::size_t>(i)];
    }
    traj.planned = planned_;
    traj.clip_count = state_.clip_count;
    traj.terminated_early = early_;
    return traj;
  }

 private:
  const EnvSpec& env_;
  EnvState state_;
  std::vector<Eigen::VectorXd> observations_;
  std::vector<Eigen::VectorXd> actions_;
  std::vector<bool> planned_;
  std::vector<double> divergence_;
  bool done_ = false;
  bool early_ = false;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

ShootingProblem make_problem(const EnvSpec& env, const ExplorerOptions& options,
                             const DynamicsModel& model, const Eigen::VectorXd& s0,
                             int horizon) {
  ShootingProblem problem;
  problem.s0 = s0;
  problem.horizon = horizon;
  problem.dynamics = std::make_shared<LearnedDynamics>(model);
  problem.objective =
      make_objective(options.objective, model, env, step_weights(options.weighting, horizon));
  problem.action_low = env.action_low;
  problem.action_high = env.action_high;
  problem.state_scale = observation_scale(env);
  return problem;
}

// Previous plan truncated or zero-padded to `horizon` rows.
Eigen::MatrixXd resize_plan(const Eigen::MatrixXd& plan, int horizon, int k) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(horizon, k);
  const Eigen::Index rows = std::min<Eigen::Index>(horizon, plan.rows());
  out.topRows(rows) = plan.topRows(rows);
  return out;
}

// Piecewise-constant random actions: levels uniform within bounds, segment
// lengths uniform in [1, max(1, horizon / 4)].
Eigen::MatrixXd sample_piecewise_actions(const EnvSpec& env, int horizon, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int max_len = std::max(1, horizon / 4);
  Eigen::MatrixXd actions(horizon, env.action_dim);
  int t = 0;
  while (t < horizon) {
    const int len = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_len));
    Eigen::VectorXd level(env.action_dim);
    for (int j = 0; j < env.action_dim; ++j) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      level[j] = env.action_low[j] + u * (env.action_high[j] - env.action_low[j]);
    }
    for (int i = 0; i < len && t < horizon; ++i, ++t) actions.row(t) = level.transpose();
  }
  return actions;
}

// Initial action sequence with the lowest objective along its model rollout
// among zeros, the previous plan (when enabled) and seeded random sequences.
// The previous plan is off by default: where its model rollout drifts from
// the executed states it keeps scoring well and the same episode repeats.
WarmStart choose_init(const EnvSpec& env, const ShootingProblem& problem,
                      const Eigen::MatrixXd& previous, bool use_previous, int random_candidates,
                      std::uint64_t seed) {
  const int k = env.action_dim;
  std::vector<Eigen::MatrixXd> candidates{Eigen::MatrixXd::Zero(problem.horizon, k)};
  if (use_previous && previous.rows() > 0) {
    candidates.push_back(resize_plan(previous, problem.horizon, k));
  }
  for (int i = 0; i < random_candidates; ++i) {
    candidates.push_back(sample_piecewise_actions(env, problem.horizon, derive_seed(seed, i)));
  }
  WarmStart best;
  double best_value = std::numeric_limits<double>::infinity();
  for (const Eigen::MatrixXd& actions : candidates) {
    const Eigen::MatrixXd states = rollout_mean(*problem.dynamics, problem.s0, actions);
    const double value = problem.objective->evaluate(problem.s0, actions, states, nullptr, nullptr);
    if (value < best_value) {
      best_value = value;
      best = WarmStart{actions, states};
    }
  }
  return best;
}

void check_options(const EnvSpec& env, const ExplorerOptions& options, int episodes) {
  validate(env);
  if (episodes < 1) throw InvalidInput("episodes must be at least 1");
  if (options.num_features < 1) throw InvalidInput("num_features must be positive");
  if (!(options.alpha > 0.0) || !(options.initial_beta > 0.0)) {
    throw InvalidInput("alpha and initial_beta must be positive");
  }
  if (options.fixed_beta && !(*options.fixed_beta > 0.0)) {
    throw InvalidInput("fixed beta must be positive");
  }
  if (options.holdout_block < 1) throw InvalidInput("holdout_block must be positive");
  if (options.horizon < 0 || options.replan_interval < 0) {
    throw InvalidInput("horizon and replan_interval must be nonnegative");
  }
  if (!(options.holdout_fraction > 0.0 && options.holdout_fraction < 1.0)) {
    throw InvalidInput("holdout_fraction must lie in (0, 1)");
  }
}

ExplorationRun start_run(std::uint64_t seed, std::optional<ExplorationRun> resume) {
  if (!resume) {
    ExplorationRun run;
    run.seed = seed;
    return run;
  }
  if (resume->seed != seed) throw InvalidInput("resumed run has a different seed");
  if (resume->models.size() != resume->episodes.size()) {
    throw InvalidInput("resumed run is missing model snapshots");
  }
  return std::move(*resume);
}

// Plans and executes one episode; returns the trajectory and the first plan.
Trajectory plan_and_execute(const EnvSpec& env, const ExplorerOptions& options,
                            const DynamicsModel& model, const Eigen::MatrixXd& previous_plan,
                            std::uint64_t seed, Eigen::MatrixXd& plan_out, EpisodeStats& stats) {
  const int horizon = options.horizon > 0 ? options.horizon : env.episode_len;
  Executor exec(env);

  auto plan_from = [&](const Eigen::VectorXd& s0, int h, const Eigen::MatrixXd& warm) {
    ShootingProblem problem = make_problem(env, options, model, s0, h);
    const WarmStart init = choose_init(env, problem, warm, options.warm_start,
                                       options.init_candidates,
                                       derive_seed(seed, static_cast<std::uint64_t>(stats.solves)));
    // Predictive variances shrink by orders of magnitude as data accumulates;
    // normalizing by the starting value keeps the solver tolerances meaningful.
    const double start =
        std::abs(problem.objective->evaluate(problem.s0, init.actions, init.states, nullptr, nullptr));
    if (start > 0.0 && std::isfinite(start)) {
      problem.objective = std::make_shared<ScaledObjective>(problem.objective, 1.0 / start);
    }
    ShootingSolution sol = solve(problem, init, options.solver);
    ++stats.solves;
    if (!sol.stats.converged) ++stats.unconverged_solves;
    stats.solve = sol.stats;
    return sol;
  };

  ShootingSolution sol = plan_from(exec.observation(), horizon, previous_plan);
  plan_out = sol.actions;
  int cursor = 0;  // next row of `sol` to apply
  while (!exec.done() && exec.steps() < env.episode_len) {
    if (cursor >= sol.actions.rows()) break;
    const Eigen::VectorXd predicted = sol.states.row(cursor).transpose();
    exec.apply(sol.actions.row(cursor).transpose(), &predicted);
    ++cursor;
    const bool replan = options.replan_interval > 0 && cursor % options.replan_interval == 0 &&
                        !exec.done() && exec.steps() < env.episode_len;
    if (replan) {
      const int h = std::min(horizon, env.episode_len - exec.steps());
      const Eigen::MatrixXd rest = sol.actions.bottomRows(sol.actions.rows() - cursor);
      sol = plan_from(exec.observation(), h, rest);
      cursor = 0;
    }
  }
  return exec.finish();
}

ExplorationRun run_episodes(const EnvSpec& env, const ExplorerOptions& options, int episodes,
                            std::uint64_t seed, const EpisodeCallback& on_episode,
                            std::optional<ExplorationRun> resume, bool random) {
  check_options(env, options, episodes);
  ExplorationRun run = start_run(seed, std::move(resume));
  DynamicsModel model =
      run.models.empty() ? initial_model(env, options, seed) : run.models.back();

  for (int e = run.num_episodes(); e < episodes; ++e) {
    const auto start = std::chrono::steady_clock::now();
    EpisodeStats stats;
    Trajectory traj;
    Eigen::MatrixXd plan;
    if (random) {
      const Eigen::MatrixXd actions =
          sample_uniform_actions(env, env.episode_len, derive_seed(seed, kActions, e));
      traj = execute_open_loop(env, actions);
    } else {
      const Eigen::MatrixXd previous = run.plans.empty() ? Eigen::MatrixXd() : run.plans.back();
      traj = plan_and_execute(env, options, model, previous, derive_seed(seed, kInit, e), plan,
                              stats);
    }

    const TransitionSet fresh = traj.transitions();
    if (run.data.size() == 0) {
      run.data = fresh;
    } else {
      run.data.append(fresh);
    }
    run.episodes.push_back(std::move(traj));
    run.plans.push_back(plan);
    model = update_model(env, options, run, model, fresh, seed);
    run.models.push_back(model);
    stats.wall_time_s = seconds_since(start);
    run.stats.push_back(stats);
    if (on_episode) on_episode(e, run);
  }
  return run;
}

}  // namespace

TransitionSet Trajectory::transitions() const {
  TransitionSet set;
  const Eigen::Index n = steps();
  set.observations = observations.topRows(n);
  set.actions = actions;
  set.next_observations = observations.bottomRows(n);
  return set;
}

Trajectory execute_open_loop(const EnvSpec& env, const Eigen::MatrixXd& actions,
                             const Eigen::MatrixXd* planned_states) {
  validate(env);
  if (actions.cols() != env.action_dim) throw InvalidInput("action columns must equal action_dim");
  if (planned_states != nullptr &&
      (planned_states->rows() < actions.rows() || planned_states->cols() != env.obs_dim)) {
    throw InvalidInput("planned states do not cover the action sequence");
  }
  Executor exec(env);
  for (Eigen::Index t = 0; t < actions.rows() && !exec.done(); ++t) {
    if (planned_states != nullptr) {
      const Eigen::VectorXd predicted = planned_states->row(t).transpose();
      exec.apply(actions.row(t).transpose(), &predicted);
    } else {
      exec.apply(actions.row(t).transpose(), nullptr);
    }
  }
  return exec.finish();
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  // splitmix64 finalizer over a combination of the three inputs.
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ stream) ^ index);
}

std::uint64_t feature_seed(std::uint64_t seed) { return derive_seed(seed, kFeatures); }

Eigen::MatrixXd sample_uniform_actions(const EnvSpec& env, int steps, std::uint64_t seed) {
  if (steps < 0) throw InvalidInput("steps must be nonnegative");
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd actions(steps, env.action_dim);
  for (int t = 0; t < steps; ++t) {
    for (int j = 0; j < env.action_dim; ++j) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      actions(t, j) = env.action_low[j] + u * (env.action_high[j] - env.action_low[j]);
    }
  }
  return actions;
}

DynamicsModel initial_model(const EnvSpec& env, const ExplorerOptions& options,
                            std::uint64_t seed) {
  const int n = env.obs_dim + env.action_dim;
  DynamicsModel model;
  model.features = sample_feature_map(n, options.num_features,
                                      options.initial_bandwidth * input_scale(env),
                                      feature_seed(seed));
  const double beta = options.fixed_beta.value_or(options.initial_beta);
  model.belief = GaussianBelief::prior(options.num_features, env.obs_dim, options.alpha, beta);
  model.target = options.target;
  return model;
}

Eigen::VectorXd data_bandwidth(const EnvSpec& env, const ExplorerOptions& options,
                               const Eigen::MatrixXd& inputs) {
  return fit_bandwidth(inputs, options.bandwidth_floor)
      .cwiseMax(options.bandwidth_scale_floor * input_scale(env));
}

Hyperparameters fit_hyperparameters(const EnvSpec& env, const ExplorerOptions& options,
                                    const FeatureMap& map, const TransitionSet& data,
                                    bool refit_bandwidth, std::optional<double> keep_beta,
                                    std::uint64_t split_seed, Eigen::Index holdout_from) {
  Hyperparameters h{map, keep_beta.value_or(1.0)};
  const bool split_at = options.holdout_latest_episode && holdout_from > 0 &&
                        holdout_from < data.size();
  auto fit_beta_now = [&] {
    if (keep_beta) return;
    if (split_at) {
      std::vector<Eigen::Index> train(static_cast<std::size_t>(holdout_from));
      std::vector<Eigen::Index> held(static_cast<std::size_t>(data.size() - holdout_from));
      std::iota(train.begin(), train.end(), Eigen::Index{0});
      std::iota(held.begin(), held.end(), holdout_from);
      h.beta = fit_noise_precision(h.features, data.subset(train), data.subset(held),
                                   options.target, options.alpha);
    } else {
      h.beta = fit_noise_precision(h.features, data, options.target, options.alpha,
                                   options.holdout_fraction, split_seed, options.holdout_block);
    }
  };
  if (refit_bandwidth) h.features = map.with_bandwidth(data_bandwidth(env, options, data.inputs()));
  fit_beta_now();
  if (refit_bandwidth && options.bandwidth_mode == BandwidthMode::Evidence) {
    h.features = h.features.with_bandwidth(
        fit_bandwidth_evidence(h.features, data, options.target, options.alpha, h.beta));
    fit_beta_now();
  }
  return h;
}

DynamicsModel update_model(const EnvSpec& env, const ExplorerOptions& options,
                           const ExplorationRun& run, const DynamicsModel& current,
                           const TransitionSet& episode, std::uint64_t seed) {
  const int index = run.num_episodes() - 1;
  const TransitionSet& data = run.data;
  const bool refit_bandwidth = (index == 0 || options.refit_bandwidth) && data.size() >= 2;
  std::optional<double> keep_beta = options.fixed_beta;
  const Eigen::Index blocks = (data.size() + options.holdout_block - 1) / options.holdout_block;
  const bool can_hold_out = std::floor(options.holdout_fraction * static_cast<double>(blocks)) >= 1.0;
  if (!keep_beta && !((index == 0 || options.refit_beta) && can_hold_out)) {
    keep_beta = current.belief.beta;
  }
  const Hyperparameters h = fit_hyperparameters(env, options, current.features, data,
                                                refit_bandwidth, keep_beta,
                                                derive_seed(seed, kSplit, index),
                                                data.size() - episode.size());
  const FeatureMap& map = h.features;
  const double beta = h.beta;
  const bool full_refit = refit_bandwidth || beta != current.belief.beta;
  if (full_refit) return fit_model(map, data, options.target, options.alpha, beta);
  DynamicsModel next = current;
  next.belief = posterior_update(current.belief, make_dataset(map, episode, options.target));
  return next;
}

ExplorationRun run_rhc(const EnvSpec& env, const ExplorerOptions& options, int episodes,
                       std::uint64_t seed, const EpisodeCallback& on_episode,
                       std::optional<ExplorationRun> resume) {
  if (options.objective == ObjectiveKind::TaskCost) {
    throw InvalidInput("exploration needs the us or evr objective");
  }
  return run_episodes(env, options, episodes, seed, on_episode, std::move(resume), false);
}

ExplorationRun run_random(const EnvSpec& env, const ExplorerOptions& options, int episodes,
                          std::uint64_t seed, const EpisodeCallback& on_episode,
                          std::optional<ExplorationRun> resume) {
  return run_episodes(env, options, episodes, seed, on_episode, std::move(resume), true);
}

}  // namespace rhc
