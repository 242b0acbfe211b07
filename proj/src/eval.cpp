#include "rhc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "rhc/acquisition.hpp"
#include "rhc/blr.hpp"
#include "rhc/rff.hpp"

namespace rhc {

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Eigen::VectorXd uniform_in(std::mt19937_64& rng, const Eigen::VectorXd& low,
                           const Eigen::VectorXd& high) {
  Eigen::VectorXd x(low.size());
  for (Eigen::Index j = 0; j < low.size(); ++j) x[j] = low[j] + uniform01(rng) * (high[j] - low[j]);
  return x;
}

}  // namespace

TransitionSet generate_test_set(const EnvSpec& env, int num_traj, int length, std::uint64_t seed) {
  validate(env);
  if (num_traj < 1 || length < 1) throw InvalidInput("num_traj and length must be positive");
  std::mt19937_64 rng(seed);
  const Eigen::Index rows = static_cast<Eigen::Index>(num_traj) * length;
  TransitionSet set;
  set.observations.resize(rows, env.obs_dim);
  set.actions.resize(rows, env.action_dim);
  set.next_observations.resize(rows, env.obs_dim);

  constexpr int kMaxDraws = 1000;
  Eigen::Index row = 0;
  for (int i = 0; i < num_traj; ++i) {
    bool accepted = false;
    for (int draw = 0; draw < kMaxDraws && !accepted; ++draw) {
      Eigen::VectorXd x = uniform_in(rng, env.sample_low, env.sample_high);
      Eigen::MatrixXd obs(length + 1, env.obs_dim);
      Eigen::MatrixXd act(length, env.action_dim);
      obs.row(0) = observation<double>(env, x).transpose();
      accepted = true;
      for (int t = 0; t < length; ++t) {
        act.row(t) = uniform_in(rng, env.action_low, env.action_high).transpose();
        x = physics_step<double>(env, x, Eigen::VectorXd(act.row(t).transpose()));
        if (out_of_bounds(env, x) || !x.allFinite()) {
          accepted = false;
          break;
        }
        obs.row(t + 1) = observation<double>(env, x).transpose();
      }
      if (accepted) {
        set.observations.middleRows(row, length) = obs.topRows(length);
        set.actions.middleRows(row, length) = act;
        set.next_observations.middleRows(row, length) = obs.bottomRows(length);
        row += length;
      }
    }
    if (!accepted) throw NumericalError("could not draw an in-bounds test trajectory");
  }
  return set;
}

TransitionSet sample_uniform_transitions(const EnvSpec& env, int num_samples, std::uint64_t seed) {
  validate(env);
  if (num_samples < 1) throw InvalidInput("num_samples must be positive");
  std::mt19937_64 rng(seed);
  TransitionSet set;
  set.observations.resize(num_samples, env.obs_dim);
  set.actions.resize(num_samples, env.action_dim);
  set.next_observations.resize(num_samples, env.obs_dim);
  for (int i = 0; i < num_samples; ++i) {
    const Eigen::VectorXd x = uniform_in(rng, env.sample_low, env.sample_high);
    const Eigen::VectorXd a = uniform_in(rng, env.action_low, env.action_high);
    set.observations.row(i) = observation<double>(env, x).transpose();
    set.actions.row(i) = a.transpose();
    set.next_observations.row(i) = observation<double>(env, physics_step<double>(env, x, a)).transpose();
  }
  return set;
}

DynamicsModel oracle_model(const EnvSpec& env, const ExplorerOptions& model_options,
                           std::uint64_t run_seed, const OracleOptions& oracle) {
  const TransitionSet data = sample_uniform_transitions(env, oracle.num_samples, oracle.sample_seed);
  const DynamicsModel start = initial_model(env, model_options, run_seed);
  const Hyperparameters h =
      fit_hyperparameters(env, model_options, start.features, data, true,
                          model_options.fixed_beta, derive_seed(oracle.sample_seed, 2));
  return fit_model(h.features, data, model_options.target, model_options.alpha, h.beta);
}

double mean_log_likelihood(const DynamicsModel& model, const TransitionSet& test_set) {
  if (test_set.size() == 0) throw InvalidInput("empty test set");
  const Predictor predictor(model.belief);
  const Eigen::MatrixXd phi = feature_matrix(model.features, test_set.inputs());
  double total = 0.0;
  for (Eigen::Index i = 0; i < test_set.size(); ++i) {
    const Eigen::VectorXd y = model.target_of(test_set.observations.row(i).transpose(),
                                              test_set.next_observations.row(i).transpose());
    total += predictor.log_likelihood(phi.row(i).transpose(), y);
  }
  return total / static_cast<double>(test_set.size());
}

double episode_cost(const EnvSpec& env, const Trajectory& traj) {
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(env.action_dim);
  double cost = 0.0;
  for (int t = 0; t < traj.steps(); ++t) {
    cost += evaluate_stage_cost(env, traj.observations.row(t).transpose(),
                                traj.actions.row(t).transpose());
  }
  const double last = evaluate_stage_cost(env, traj.observations.bottomRows(1).transpose(), zero);
  const int missing = traj.terminated_early ? env.episode_len - traj.steps() : 0;
  return cost + last * (1 + missing);
}

DownstreamResult downstream_cost(const DynamicsModel& model, const EnvSpec& env,
                                 const DownstreamOptions& options) {
  validate(env);
  if (options.restarts < 0) throw InvalidInput("restarts must be nonnegative");
  const int horizon = options.horizon > 0 ? options.horizon : env.episode_len;

  ShootingProblem problem;
  problem.s0 = observe(env, reset(env));
  problem.horizon = horizon;
  problem.dynamics = std::make_shared<LearnedDynamics>(model);
  problem.objective = make_task_cost_objective(env);
  problem.action_low = env.action_low;
  problem.action_high = env.action_high;
  problem.state_scale = observation_scale(env);

  const Eigen::VectorXd mid = 0.5 * (env.action_low + env.action_high);
  const Eigen::VectorXd half = 0.5 * (env.action_high - env.action_low);
  std::mt19937_64 rng(options.seed);
  std::optional<ShootingSolution> best;
  for (int attempt = 0; attempt <= options.restarts; ++attempt) {
    std::optional<WarmStart> init;
    if (attempt > 0) {
      WarmStart ws;
      ws.actions.resize(horizon, env.action_dim);
      for (int t = 0; t < horizon; ++t) {
        for (int j = 0; j < env.action_dim; ++j) {
          ws.actions(t, j) = mid[j] + options.restart_scale * half[j] * (2.0 * uniform01(rng) - 1.0);
        }
      }
      init = ws;
    }
    ShootingSolution sol = solve(problem, init, options.solver);
    if (!best || sol.stats.objective < best->stats.objective) best = std::move(sol);
  }

  DownstreamResult result;
  result.predicted_cost = best->stats.objective;
  result.converged = best->stats.converged;
  const int steps = std::min(horizon, env.episode_len);
  const Eigen::MatrixXd actions = best->actions.topRows(steps);
  const Eigen::MatrixXd states = best->states.topRows(steps);
  result.trajectory = execute_open_loop(env, actions, &states);
  result.cost = episode_cost(env, result.trajectory);
  return result;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidInput("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw InvalidInput("quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw InvalidInput("spearman needs two samples of equal size >= 2");
  }
  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw InvalidInput("spearman is undefined for a constant sample");
  return sxy / std::sqrt(sxx * syy);
}

int episodes_to_threshold(const std::vector<double>& values, double threshold) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] >= threshold) return static_cast<int>(i) + 1;
  }
  return 0;
}

}  // namespace rhc
