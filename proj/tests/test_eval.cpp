#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "rhc/eval.hpp"

namespace rhc {
namespace {

TEST(Eval, TestSetSize) {
  const EnvSpec env = make_env(EnvId::Pendulum);
  const TransitionSet set = generate_test_set(env, 50, 10, 0);
  EXPECT_EQ(set.size(), 500);
  EXPECT_EQ(set.observations.cols(), 3);
  EXPECT_EQ(set.actions.cols(), 1);
  EXPECT_TRUE(set.next_observations.allFinite());
}

TEST(Eval, TestSetIsSeeded) {
  const EnvSpec env = make_env(EnvId::MountainCar);
  EXPECT_EQ(generate_test_set(env, 5, 4, 7).observations, generate_test_set(env, 5, 4, 7).observations);
  EXPECT_NE(generate_test_set(env, 5, 4, 7).observations, generate_test_set(env, 5, 4, 8).observations);
}

TEST(Eval, TestSetTrajectoriesAreContiguous) {
  const EnvSpec env = make_env(EnvId::MountainCar);
  const TransitionSet set = generate_test_set(env, 3, 5, 1);
  for (int r = 0; r < 3; ++r)
    for (int t = 0; t + 1 < 5; ++t)
      EXPECT_EQ(set.next_observations.row(5 * r + t), set.observations.row(5 * r + t + 1));
}

TEST(Eval, EmptyTestSetThrows) {
  DynamicsModel model;
  model.features = sample_feature_map(3, 4, Eigen::VectorXd::Ones(3), 0);
  model.belief = GaussianBelief::prior(4, 2, 1.0, 1.0);
  TransitionSet empty{Eigen::MatrixXd(0, 2), Eigen::MatrixXd(0, 1), Eigen::MatrixXd(0, 2)};
  EXPECT_THROW(mean_log_likelihood(model, empty), InvalidInput);
}

TEST(Eval, ExactModelLikelihood) {
  // Zero-mean delta model on transitions that do not move, with a nearly
  // certain weight posterior: the likelihood is the noise density at zero.
  const double beta = 50.0;
  DynamicsModel model;
  model.features = sample_feature_map(3, 4, Eigen::VectorXd::Ones(3), 0);
  model.belief = GaussianBelief::prior(4, 2, 1e12, beta);
  const Eigen::MatrixXd obs = Eigen::MatrixXd::Random(20, 2);
  const TransitionSet still{obs, Eigen::MatrixXd::Random(20, 1), obs};
  EXPECT_NEAR(mean_log_likelihood(model, still), -std::log(2.0 * std::numbers::pi / beta), 1e-9);
}

TEST(Eval, MeanIsUnweightedAverage) {
  const EnvSpec env = make_env(EnvId::Pendulum);
  ExplorerOptions options;
  options.num_features = 15;
  const DynamicsModel model = oracle_model(env, options, 0, {.num_samples = 300, .sample_seed = 4});
  const TransitionSet set = generate_test_set(env, 4, 5, 2);
  double total = 0.0;
  for (Eigen::Index i = 0; i < set.size(); ++i) {
    Eigen::VectorXd x(4);
    x << set.observations.row(i).transpose(), set.actions.row(i).transpose();
    total += log_likelihood(model.belief, featurize(model.features, x),
                            model.target_of(set.observations.row(i).transpose(),
                                            set.next_observations.row(i).transpose()));
  }
  EXPECT_NEAR(mean_log_likelihood(model, set), total / static_cast<double>(set.size()), 1e-9);
}

TEST(Eval, OracleConvergesInSampleCount) {
  const EnvSpec env = make_env(EnvId::MountainCar);
  ExplorerOptions options;
  options.num_features = 20;
  const TransitionSet test = generate_test_set(env, 100, 10, 1000);
  const double base = mean_log_likelihood(oracle_model(env, options, 0, {.num_samples = 10000}), test);
  const double twice = mean_log_likelihood(oracle_model(env, options, 0, {.num_samples = 20000}), test);
  EXPECT_LT(std::abs(twice - base), 0.05);
}

TEST(Eval, OracleBeatsRandomExploration) {
  const EnvSpec env = make_env(EnvId::MountainCar);
  ExplorerOptions options;
  options.num_features = 20;
  const TransitionSet test = generate_test_set(env, 100, 10, 1000);
  std::vector<double> oracle;
  std::vector<double> rand;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    oracle.push_back(mean_log_likelihood(oracle_model(env, options, seed), test));
    const ExplorationRun run = run_random(env, options, 20, seed);
    rand.push_back(mean_log_likelihood(run.models.back(), test));
  }
  EXPECT_GE(quantile(oracle, 0.5), quantile(rand, 0.5));
}

TEST(Eval, EpisodeCostSumsStageCosts) {
  const EnvSpec env = make_env(EnvId::Pendulum);
  const Trajectory traj = execute_open_loop(env, sample_uniform_actions(env, env.episode_len, 3));
  double expected = 0.0;
  for (int t = 0; t < traj.steps(); ++t)
    expected += evaluate_stage_cost(env, traj.observations.row(t).transpose(), traj.actions.row(t).transpose());
  expected += evaluate_stage_cost(env, traj.observations.row(traj.steps()).transpose(),
                                  Eigen::VectorXd::Zero(1));
  EXPECT_NEAR(episode_cost(env, traj), expected, 1e-9 * expected);
}

TEST(Eval, EarlyTerminationIsCharged) {
  const EnvSpec env = make_env(EnvId::CartPole);
  const Trajectory traj = execute_open_loop(env, Eigen::MatrixXd::Constant(100, 1, 10.0));
  ASSERT_TRUE(traj.terminated_early);
  double expected = 0.0;
  for (int t = 0; t < traj.steps(); ++t)
    expected += evaluate_stage_cost(env, traj.observations.row(t).transpose(), traj.actions.row(t).transpose());
  const double last = evaluate_stage_cost(env, traj.observations.row(traj.steps()).transpose(),
                                          Eigen::VectorXd::Zero(1));
  expected += last * (env.episode_len - traj.steps() + 1);
  EXPECT_NEAR(episode_cost(env, traj), expected, 1e-9 * expected);
}

TEST(Eval, DownstreamCostMatchesExecution) {
  const EnvSpec env = make_env(EnvId::Pendulum);
  ExplorerOptions options;
  options.num_features = 20;
  const DynamicsModel model = initial_model(env, options, 0);
  DownstreamOptions ds;
  ds.restarts = 0;
  ds.solver.max_outer = 3;
  ds.solver.max_inner = 50;
  const DownstreamResult r = downstream_cost(model, env, ds);
  EXPECT_NEAR(r.cost, episode_cost(env, r.trajectory), 1e-9 * r.cost);
  // A prior-only model has no idea how to swing up.
  const double idle = episode_cost(env, execute_open_loop(env, Eigen::MatrixXd::Zero(env.episode_len, 1)));
  EXPECT_GE(r.cost, 0.9 * idle);
}

TEST(Eval, OracleSwingsUpPendulum) {
  const EnvSpec env = make_env(EnvId::Pendulum);
  ExplorerOptions options;
  options.num_features = 90;
  const DynamicsModel oracle = oracle_model(env, options, 0, {.num_samples = 4000, .sample_seed = 0});
  const DownstreamResult r = downstream_cost(oracle, env);
  const Eigen::MatrixXd& obs = r.trajectory.observations;
  double closest = std::numbers::pi;
  for (Eigen::Index t = 0; t < obs.rows(); ++t)
    closest = std::min(closest, std::abs(std::atan2(obs(t, 1), obs(t, 0))));
  EXPECT_LT(closest, 0.3);
}

TEST(Eval, QuantileMatchesType7) {
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({5}, 0.1), 5.0);
  EXPECT_DOUBLE_EQ(quantile({3, 1, 2}, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile({3, 1, 2}, 1.0), 3.0);
  EXPECT_NEAR(quantile({10, 20, 30, 40, 50, 60, 70, 80, 90, 100}, 0.1), 19.0, 1e-12);
  EXPECT_THROW(quantile({}, 0.5), InvalidInput);
  EXPECT_THROW(quantile({1, 2}, 1.5), InvalidInput);
}

TEST(Eval, SpearmanWithTies) {
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0, 1e-12);
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0, 1e-12);
  // Ranks (1, 2.5, 2.5, 4) against (1, 2, 3, 4).
  EXPECT_NEAR(spearman({1, 2, 2, 3}, {1, 2, 3, 4}), 4.5 / std::sqrt(4.5 * 5.0), 1e-12);
  EXPECT_THROW(spearman({1, 1, 1}, {1, 2, 3}), InvalidInput);
  EXPECT_THROW(spearman({1}, {1}), InvalidInput);
}

TEST(Eval, EpisodesToThreshold) {
  EXPECT_EQ(episodes_to_threshold({-5, -1, 0.5, 2}, 0.0), 3);
  EXPECT_EQ(episodes_to_threshold({-5, -1}, 0.0), 0);
  EXPECT_EQ(episodes_to_threshold({1}, 1.0), 1);
}

}  // namespace
}  // namespace rhc
