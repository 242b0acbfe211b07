#include "rhc/acquisition.hpp"

#include <cmath>

#include <fmt/format.h>

namespace rhc {

namespace {

constexpr double kLog2PiE = 2.8378770664093453;  // ln(2 pi e)

void check_plan(const DynamicsModel& model, const Eigen::VectorXd& s0,
                const Eigen::MatrixXd& actions, const Eigen::MatrixXd& states) {
  const int n = model.obs_dim();
  const int k = model.action_dim();
  if (s0.size() != n || actions.cols() != k || states.cols() != n ||
      states.rows() != actions.rows()) {
    throw InvalidInput(fmt::format(
        "plan shapes s0={} actions={}x{} states={}x{} do not match model (n={}, k={})", s0.size(),
        actions.rows(), actions.cols(), states.rows(), states.cols(), n, k));
  }
}

Eigen::VectorXd stage_input(const Eigen::VectorXd& s0, const Eigen::MatrixXd& actions,
                            const Eigen::MatrixXd& states, int t) {
  const Eigen::Index n = s0.size();
  Eigen::VectorXd x(n + actions.cols());
  x.head(n) = t == 0 ? s0 : Eigen::VectorXd(states.row(t - 1).transpose());
  x.tail(actions.cols()) = actions.row(t).transpose();
  return x;
}

// Feature matrix (m x T) of the planned stage inputs.
Eigen::MatrixXd plan_features(const DynamicsModel& model, const Eigen::VectorXd& s0,
                              const Eigen::MatrixXd& actions, const Eigen::MatrixXd& states) {
  const auto horizon = static_cast<int>(actions.rows());
  Eigen::MatrixXd phi(model.features.num_features(), horizon);
  for (int t = 0; t < horizon; ++t) {
    phi.col(t) = featurize<double>(model.features, stage_input(s0, actions, states, t));
  }
  return phi;
}

// Features and their Jacobians (m x (n + k)) for every stage.
struct PlanFeatures {
  Eigen::MatrixXd phi;
  std::vector<Eigen::MatrixXd> jacobians;
};

PlanFeatures plan_features_with_jacobians(const DynamicsModel& model, const Eigen::VectorXd& s0,
                                          const Eigen::MatrixXd& actions,
                                          const Eigen::MatrixXd& states) {
  const auto horizon = static_cast<int>(actions.rows());
  const int m = model.features.num_features();
  const int width = model.features.input_dim();
  PlanFeatures out;
  out.phi.resize(m, horizon);
  out.jacobians.resize(static_cast<std::size_t>(horizon));
  Vec<StageDual> xd(width);
  for (int t = 0; t < horizon; ++t) {
    const Eigen::VectorXd x = stage_input(s0, actions, states, t);
    for (int j = 0; j < width; ++j) xd[j] = StageDual::variable(x[j], j);
    const Vec<StageDual> f = featurize<StageDual>(model.features, xd);
    Eigen::MatrixXd& jac = out.jacobians[static_cast<std::size_t>(t)];
    jac.resize(m, width);
    for (int i = 0; i < m; ++i) {
      out.phi(i, t) = f[i].v;
      jac.row(i) = f[i].d.head(width).transpose();
    }
  }
  return out;
}

// Scatters a per-stage input gradient into action/state gradients.
void scatter(int t, const Eigen::VectorXd& g, int n, Eigen::MatrixXd& grad_actions,
             Eigen::MatrixXd& grad_states) {
  if (t > 0) grad_states.row(t - 1) += g.head(n).transpose();
  grad_actions.row(t) += g.tail(g.size() - n).transpose();
}

Eigen::VectorXd resolve_weights(const Eigen::VectorXd& weights, Eigen::Index horizon) {
  if (weights.size() == 0) return Eigen::VectorXd::Ones(horizon);
  if (weights.size() != horizon) throw InvalidInput("weights must have one entry per step");
  if ((weights.array() < 0.0).any()) throw InvalidInput("weights must be nonnegative");
  return weights;
}

// Precision after appending the columns of `phi` as observations.
Eigen::MatrixXd augmented_precision(const GaussianBelief& belief, const Eigen::MatrixXd& phi) {
  Eigen::MatrixXd a = belief.precision;
  if (phi.cols() > 0) {
    a.selfadjointView<Eigen::Lower>().rankUpdate(phi, belief.beta);
    a.triangularView<Eigen::StrictlyUpper>() = a.transpose().triangularView<Eigen::StrictlyUpper>();
  }
  return a;
}

}  // namespace

std::string_view objective_kind_name(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::UncertaintySampling:
      return "us";
    case ObjectiveKind::ExpectedVarianceReduction:
      return "evr";
    case ObjectiveKind::TaskCost:
      return "task";
  }
  return "unknown";
}

ObjectiveKind parse_objective_kind(std::string_view name) {
  if (name == "us") return ObjectiveKind::UncertaintySampling;
  if (name == "evr") return ObjectiveKind::ExpectedVarianceReduction;
  if (name == "task") return ObjectiveKind::TaskCost;
  throw InvalidInput(fmt::format("unknown objective '{}'", name));
}

Eigen::VectorXd step_weights(StepWeighting scheme, int horizon) {
  if (scheme == StepWeighting::Uniform) return Eigen::VectorXd::Ones(horizon);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(horizon);
  if (horizon > 0) w[horizon - 1] = 1.0;
  return w;
}

bool evr_within_gate(int num_features, int horizon) {
  return num_features <= kEvrMaxFeatures && horizon <= kEvrMaxHorizon;
}

double us_objective(const DynamicsModel& model, const Eigen::VectorXd& s0,
                    const Eigen::MatrixXd& actions, const Eigen::MatrixXd& states,
                    const Eigen::VectorXd& weights) {
  check_plan(model, s0, actions, states);
  const Eigen::VectorXd w = resolve_weights(weights, actions.rows());
  const PrecisionFactor factor(model.belief.precision);
  const Eigen::MatrixXd phi = plan_features(model, s0, actions, states);
  double total = 0.0;
  for (Eigen::Index t = 0; t < phi.cols(); ++t) {
    total += w[t] * (1.0 / model.belief.beta + factor.quadratic(phi.col(t)));
  }
  return total;
}

double evr_objective(const DynamicsModel& model, const Eigen::VectorXd& s0,
                     const Eigen::MatrixXd& actions, const Eigen::MatrixXd& states) {
  check_plan(model, s0, actions, states);
  GaussianBelief post = model.belief;
  post.precision = augmented_precision(model.belief, plan_features(model, s0, actions, states));
  return entropy(post);
}

double pe_bonus(const DynamicsModel& model, const Eigen::VectorXd& s, const Eigen::VectorXd& a,
                const Eigen::VectorXd& s_next) {
  if (!s.allFinite() || !a.allFinite() || !s_next.allFinite()) {
    throw InvalidInput("non-finite transition");
  }
  return (s_next - model.mean_next<double>(s, a)).squaredNorm();
}

double ig_bonus(const GaussianBelief& before, const GaussianBelief& after) {
  return entropy(before) - entropy(after);
}

LearnedDynamics::LearnedDynamics(DynamicsModel model) : model_(std::move(model)) {
  if (model_.features.input_dim() > kStageTangents) {
    throw InvalidInput("model input exceeds the stage tangent width");
  }
}

Eigen::VectorXd LearnedDynamics::next(const Eigen::VectorXd& s, const Eigen::VectorXd& a) const {
  return model_.mean_next<double>(s, a);
}

Eigen::VectorXd LearnedDynamics::next(const Eigen::VectorXd& s, const Eigen::VectorXd& a,
                                      Eigen::MatrixXd& jacobian) const {
  const int n = static_cast<int>(s.size());
  const int k = static_cast<int>(a.size());
  Vec<StageDual> sd(n);
  Vec<StageDual> ad(k);
  for (int j = 0; j < n; ++j) sd[j] = StageDual::variable(s[j], j);
  for (int j = 0; j < k; ++j) ad[j] = StageDual::variable(a[j], n + j);
  const Vec<StageDual> out = model_.mean_next<StageDual>(sd, ad);
  Eigen::VectorXd value(out.size());
  jacobian.resize(out.size(), n + k);
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    value[i] = out[i].v;
    jacobian.row(i) = out[i].d.head(n + k).transpose();
  }
  return value;
}

UncertaintySamplingObjective::UncertaintySamplingObjective(DynamicsModel model,
                                                           Eigen::VectorXd weights)
    : model_(std::move(model)), weights_(std::move(weights)), factor_(model_.belief.precision) {}

double UncertaintySamplingObjective::evaluate(const Eigen::VectorXd& s0,
                                              const Eigen::MatrixXd& actions,
                                              const Eigen::MatrixXd& states,
                                              Eigen::MatrixXd* grad_actions,
                                              Eigen::MatrixXd* grad_states) const {
  const Eigen::VectorXd w = resolve_weights(weights_, actions.rows());
  const double noise = 1.0 / model_.belief.beta;
  if (grad_actions == nullptr || grad_states == nullptr) {
    const Eigen::MatrixXd phi = plan_features(model_, s0, actions, states);
    const Eigen::MatrixXd sphi = factor_.solve(phi);
    double total = 0.0;
    for (Eigen::Index t = 0; t < phi.cols(); ++t) total += w[t] * (noise + phi.col(t).dot(sphi.col(t)));
    return -total;
  }
  const PlanFeatures pf = plan_features_with_jacobians(model_, s0, actions, states);
  const Eigen::MatrixXd sphi = factor_.solve(pf.phi);
  grad_actions->setZero(actions.rows(), actions.cols());
  grad_states->setZero(states.rows(), states.cols());
  double total = 0.0;
  const int n = model_.obs_dim();
  for (Eigen::Index t = 0; t < pf.phi.cols(); ++t) {
    total += w[t] * (noise + pf.phi.col(t).dot(sphi.col(t)));
    // d(phi^T Sigma phi)/dx = 2 (Sigma phi)^T dphi/dx, negated for minimization.
    const Eigen::VectorXd g =
        -2.0 * w[t] * pf.jacobians[static_cast<std::size_t>(t)].transpose() * sphi.col(t);
    scatter(static_cast<int>(t), g, n, *grad_actions, *grad_states);
  }
  return -total;
}

VarianceReductionObjective::VarianceReductionObjective(DynamicsModel model)
    : model_(std::move(model)) {}

double VarianceReductionObjective::evaluate(const Eigen::VectorXd& s0,
                                            const Eigen::MatrixXd& actions,
                                            const Eigen::MatrixXd& states,
                                            Eigen::MatrixXd* grad_actions,
                                            Eigen::MatrixXd* grad_states) const {
  const double m = model_.features.num_features();
  const double d = model_.obs_dim();
  const bool want_grad = grad_actions != nullptr && grad_states != nullptr;
  PlanFeatures pf;
  if (want_grad) {
    pf = plan_features_with_jacobians(model_, s0, actions, states);
  } else {
    pf.phi = plan_features(model_, s0, actions, states);
  }
  const PrecisionFactor factor(augmented_precision(model_.belief, pf.phi));
  const double value = d * (0.5 * factor.log_det_covariance() + 0.5 * m * kLog2PiE);
  if (!want_grad) return value;

  // d/dphi_t of -(d/2) ln det(A) with A = P + beta sum phi phi^T is -d beta A^{-1} phi_t.
  const Eigen::MatrixXd aphi = factor.solve(pf.phi);
  grad_actions->setZero(actions.rows(), actions.cols());
  grad_states->setZero(states.rows(), states.cols());
  const int n = model_.obs_dim();
  for (Eigen::Index t = 0; t < pf.phi.cols(); ++t) {
    const Eigen::VectorXd g = -d * model_.belief.beta *
                              pf.jacobians[static_cast<std::size_t>(t)].transpose() * aphi.col(t);
    scatter(static_cast<int>(t), g, n, *grad_actions, *grad_states);
  }
  return value;
}

namespace {

struct TaskCost {
  EnvSpec env;

  template <class S>
  S stage(int /*t*/, const Vec<S>& s, const Vec<S>& a) const {
    return stage_cost<S>(env, s, a);
  }
  template <class S>
  S terminal(const Vec<S>& s) const {
    return stage_cost<S>(env, s, Vec<S>::Zero(env.action_dim));
  }
};

}  // namespace

std::shared_ptr<const Objective> make_task_cost_objective(const EnvSpec& env) {
  return make_stage_objective(TaskCost{env});
}

std::shared_ptr<const Objective> make_objective(ObjectiveKind kind, const DynamicsModel& model,
                                                const EnvSpec& env,
                                                const Eigen::VectorXd& weights) {
  switch (kind) {
    case ObjectiveKind::UncertaintySampling:
      return std::make_shared<UncertaintySamplingObjective>(model, weights);
    case ObjectiveKind::ExpectedVarianceReduction:
      return std::make_shared<VarianceReductionObjective>(model);
    case ObjectiveKind::TaskCost:
      return make_task_cost_objective(env);
  }
  throw InvalidInput("unknown objective kind");
}

}  // namespace rhc
