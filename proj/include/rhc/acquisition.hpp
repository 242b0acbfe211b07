#pragma once

// Exploration objectives over a planned trajectory under the learned model.
//
// Both acquisition functions propagate only the mean state: the planned
// states are decision variables tied to the model's mean prediction by the
// shooting constraints, and uncertainty is read off at each planned
// (state, action) pair.

#include <memory>
#include <string_view>

#include <Eigen/Core>

#include "rhc/blr.hpp"
#include "rhc/envs.hpp"
#include "rhc/model.hpp"
#include "rhc/trajopt.hpp"

namespace rhc {

enum class ObjectiveKind { UncertaintySampling, ExpectedVarianceReduction, TaskCost };

std::string_view objective_kind_name(ObjectiveKind kind);
/// "us", "evr" or "task".
ObjectiveKind parse_objective_kind(std::string_view name);

enum class StepWeighting { Uniform, LastStep };

/// Per-timestep weights of length T.
Eigen::VectorXd step_weights(StepWeighting scheme, int horizon);

/// Sum over t of w_t * Var[s_t | s_{t-1}, a_{t-1}] along the planned
/// trajectory, with the weight covariance held fixed. To be maximized.
/// Empty `weights` means all ones.
double us_objective(const DynamicsModel& model, const Eigen::VectorXd& s0,
                    const Eigen::MatrixXd& actions, const Eigen::MatrixXd& states,
                    const Eigen::VectorXd& weights = {});

/// Entropy of the weight posterior obtained by appending the planned
/// trajectory's feature rows to the current belief. To be minimized.
double evr_objective(const DynamicsModel& model, const Eigen::VectorXd& s0,
                     const Eigen::MatrixXd& actions, const Eigen::MatrixXd& states);

/// Squared prediction error |s' - E[s' | s, a]|^2.
double pe_bonus(const DynamicsModel& model, const Eigen::VectorXd& s, const Eigen::VectorXd& a,
                const Eigen::VectorXd& s_next);

/// Entropy reduction H(before) - H(after).
double ig_bonus(const GaussianBelief& before, const GaussianBelief& after);

/// EVR planning cost grows quickly with the model size; it is only offered
/// for m <= 40 features and horizons T <= 150.
inline constexpr int kEvrMaxFeatures = 40;
inline constexpr int kEvrMaxHorizon = 150;
bool evr_within_gate(int num_features, int horizon);

/// Mean dynamics of a learned model as a trajectory-optimization constraint.
class LearnedDynamics final : public Dynamics {
 public:
  explicit LearnedDynamics(DynamicsModel model);
  int state_dim() const override { return model_.obs_dim(); }
  int action_dim() const override { return model_.action_dim(); }
  Eigen::VectorXd next(const Eigen::VectorXd& s, const Eigen::VectorXd& a) const override;
  Eigen::VectorXd next(const Eigen::VectorXd& s, const Eigen::VectorXd& a,
                       Eigen::MatrixXd& jacobian) const override;

 private:
  DynamicsModel model_;
};

/// Negated uncertainty-sampling objective (minimized by the solver).
class UncertaintySamplingObjective final : public Objective {
 public:
  UncertaintySamplingObjective(DynamicsModel model, Eigen::VectorXd weights);
  double evaluate(const Eigen::VectorXd& s0, const Eigen::MatrixXd& actions,
                  const Eigen::MatrixXd& states, Eigen::MatrixXd* grad_actions,
                  Eigen::MatrixXd* grad_states) const override;

 private:
  DynamicsModel model_;
  Eigen::VectorXd weights_;
  PrecisionFactor factor_;
};

class VarianceReductionObjective final : public Objective {
 public:
  explicit VarianceReductionObjective(DynamicsModel model);
  double evaluate(const Eigen::VectorXd& s0, const Eigen::MatrixXd& actions,
                  const Eigen::MatrixXd& states, Eigen::MatrixXd* grad_actions,
                  Eigen::MatrixXd* grad_states) const override;

 private:
  DynamicsModel model_;
};

/// sum_{t<T} c(s_t, a_t) + c(s_T, 0) with the environment's stage cost.
std::shared_ptr<const Objective> make_task_cost_objective(const EnvSpec& env);

/// Objective for `kind`; weights apply to uncertainty sampling only.
std::shared_ptr<const Objective> make_objective(ObjectiveKind kind, const DynamicsModel& model,
                                                const EnvSpec& env,
                                                const Eigen::VectorXd& weights = {});

}  // namespace rhc
