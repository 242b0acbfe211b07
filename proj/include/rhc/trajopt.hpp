#pragma once

// Multiple-shooting trajectory optimization.
//
// Decision variables are the actions a_0..a_{T-1} and the states s_1..s_T;
// s_0 is fixed. The dynamics enter as equality constraints
//   c_t = s_t - f(s_{t-1}, a_{t-1}) = 0,  t = 1..T,
// handled by an augmented Lagrangian outer loop. Each inner problem is a
// bound-constrained minimization solved with projected L-BFGS.
//
// Matrix conventions: `actions` is T x action_dim with row t = a_t, and
// `states` is T x state_dim with row t = s_{t+1}.

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "rhc/dual.hpp"
#include "rhc/error.hpp"
#include "rhc/types.hpp"

namespace rhc {

/// Differentiable discrete-time map (s, a) -> s'.
class Dynamics {
 public:
  virtual ~Dynamics() = default;
  virtual int state_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual Eigen::VectorXd next(const Eigen::VectorXd& s, const Eigen::VectorXd& a) const = 0;
  /// Also writes d s' / d [s; a] into `jacobian` (state_dim x (state_dim + action_dim)).
  virtual Eigen::VectorXd next(const Eigen::VectorXd& s, const Eigen::VectorXd& a,
                               Eigen::MatrixXd& jacobian) const = 0;
};

/// Dynamics from a functor generic over the scalar type:
///   template <class S> Vec<S> operator()(const Vec<S>& s, const Vec<S>& a) const;
/// Jacobians come from forward-mode dual numbers.
template <class F>
class AutodiffDynamics final : public Dynamics {
 public:
  AutodiffDynamics(int state_dim, int action_dim, F f)
      : n_(state_dim), k_(action_dim), f_(std::move(f)) {
    if (n_ + k_ > kStageTangents) {
      throw InvalidInput("state_dim + action_dim exceeds the stage tangent width");
    }
  }

  int state_dim() const override { return n_; }
  int action_dim() const override { return k_; }

  Eigen::VectorXd next(const Eigen::VectorXd& s, const Eigen::VectorXd& a) const override {
    return f_(s, a);
  }

  Eigen::VectorXd next(const Eigen::VectorXd& s, const Eigen::VectorXd& a,
                       Eigen::MatrixXd& jacobian) const override {
    Vec<StageDual> sd(n_);
    Vec<StageDual> ad(k_);
    for (int j = 0; j < n_; ++j) sd[j] = StageDual::variable(s[j], j);
    for (int j = 0; j < k_; ++j) ad[j] = StageDual::variable(a[j], n_ + j);
    const Vec<StageDual> out = f_(sd, ad);
    Eigen::VectorXd value(out.size());
    jacobian.resize(out.size(), n_ + k_);
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      value[i] = out[i].v;
      jacobian.row(i) = out[i].d.head(n_ + k_).transpose();
    }
    return value;
  }

 private:
  int n_;
  int k_;
  F f_;
};

template <class F>
std::shared_ptr<const Dynamics> make_autodiff_dynamics(int state_dim, int action_dim, F f) {
  return std::make_shared<AutodiffDynamics<F>>(state_dim, action_dim, std::move(f));
}

/// Trajectory objective to be minimized.
class Objective {
 public:
  virtual ~Objective() = default;
  /// Gradients, when requested, have the shapes of `actions` and `states`.
  virtual double evaluate(const Eigen::VectorXd& s0, const Eigen::MatrixXd& actions,
                          const Eigen::MatrixXd& states, Eigen::MatrixXd* grad_actions,
                          Eigen::MatrixXd* grad_states) const = 0;
};

/// Objective of the form sum_t stage(t, s_t, a_t) + terminal(s_T). F provides
///   template <class S> S stage(int t, const Vec<S>& s, const Vec<S>& a) const;
///   template <class S> S terminal(const Vec<S>& s) const;
template <class F>
class StageObjective final : public Objective {
 public:
  explicit StageObjective(F f) : f_(std::move(f)) {}

  double evaluate(const Eigen::VectorXd& s0, const Eigen::MatrixXd& actions,
                  const Eigen::MatrixXd& states, Eigen::MatrixXd* grad_actions,
                  Eigen::MatrixXd* grad_states) const override {
    const int horizon = static_cast<int>(actions.rows());
    const int n = static_cast<int>(s0.size());
    const int k = static_cast<int>(actions.cols());
    const bool want_grad = grad_actions != nullptr && grad_states != nullptr;
    if (want_grad) {
      grad_actions->setZero(actions.rows(), actions.cols());
      grad_states->setZero(states.rows(), states.cols());
    }
    double total = 0.0;
    for (int t = 0; t < horizon; ++t) {
      const Eigen::VectorXd s = t == 0 ? s0 : Eigen::VectorXd(states.row(t - 1).transpose());
      const Eigen::VectorXd a = actions.row(t).transpose();
      if (!want_grad) {
        total += f_.stage(t, Vec<double>(s), Vec<double>(a));
        continue;
      }
      Vec<StageDual> sd(n);
      Vec<StageDual> ad(k);
      for (int j = 0; j < n; ++j) sd[j] = StageDual::variable(s[j], j);
      for (int j = 0; j < k; ++j) ad[j] = StageDual::variable(a[j], n + j);
      const StageDual c = f_.stage(t, sd, ad);
      total += c.v;
      if (t > 0) grad_states->row(t - 1) += c.d.head(n).transpose();
      grad_actions->row(t) += c.d.segment(n, k).transpose();
    }
    const Eigen::VectorXd s_last =
        horizon == 0 ? s0 : Eigen::VectorXd(states.row(horizon - 1).transpose());
    if (!want_grad || horizon == 0) {
      total += f_.terminal(Vec<double>(s_last));
    } else {
      Vec<StageDual> sd(n);
      for (int j = 0; j < n; ++j) sd[j] = StageDual::variable(s_last[j], j);
      const StageDual c = f_.terminal(sd);
      total += c.v;
      grad_states->row(horizon - 1) += c.d.head(n).transpose();
    }
    return total;
  }

 private:
  F f_;
};

template <class F>
std::shared_ptr<const Objective> make_stage_objective(F f) {
  return std::make_shared<StageObjective<F>>(std::move(f));
}

/// `factor` times another objective.
class ScaledObjective final : public Objective {
 public:
  ScaledObjective(std::shared_ptr<const Objective> inner, double factor)
      : inner_(std::move(inner)), factor_(factor) {}
  double evaluate(const Eigen::VectorXd& s0, const Eigen::MatrixXd& actions,
                  const Eigen::MatrixXd& states, Eigen::MatrixXd* grad_actions,
                  Eigen::MatrixXd* grad_states) const override {
    const double value = inner_->evaluate(s0, actions, states, grad_actions, grad_states);
    if (grad_actions != nullptr) *grad_actions *= factor_;
    if (grad_states != nullptr) *grad_states *= factor_;
    return factor_ * value;
  }

 private:
  std::shared_ptr<const Objective> inner_;
  double factor_;
};

struct ShootingProblem {
  Eigen::VectorXd s0;
  int horizon = 0;
  std::shared_ptr<const Dynamics> dynamics;
  std::shared_ptr<const Objective> objective;
  Eigen::VectorXd action_low;
  Eigen::VectorXd action_high;
  Eigen::VectorXd state_low;    // empty: unbounded
  Eigen::VectorXd state_high;   // empty: unbounded
  Eigen::VectorXd state_scale;  // empty: ones. Typical magnitude of each state coordinate.
};

struct WarmStart {
  Eigen::MatrixXd actions;  // T x k
  Eigen::MatrixXd states;   // T x n, or empty to roll out `actions`
};

struct SolverOptions {
  double penalty_init = 10.0;
  double penalty_growth = 10.0;
  double penalty_max = 1e10;
  int max_outer = 12;
  int max_inner = 400;
  double feasibility_tol = 1e-4;
  double gradient_tol = 1e-6;  // relative to max(1, |L|)
  int memory = 10;
  int polish_iterations = 200;  // single-shooting refinement of the actions; 0 disables
  std::string trace_path;  // optional CSV trace, one row per outer iteration
};

struct SolveStats {
  int iterations = 0;  // inner iterations over all outer iterations
  int outer_iterations = 0;
  double constraint_violation = 0.0;  // max-norm of the defects at the final iterate
  double objective = 0.0;             // at the returned, feasibility-restored point
  bool converged = false;
  bool fell_back_to_init = false;
  double wall_time_s = 0.0;
};

struct ShootingSolution {
  Eigen::MatrixXd actions;
  Eigen::MatrixXd states;
  SolveStats stats;
};

/// Iterates s_{t+1} = f(s_t, a_t) from s0; returns the T x n state matrix.
/// Throws NumericalError naming the first step that produces non-finite values.
Eigen::MatrixXd rollout_mean(const Dynamics& dynamics, const Eigen::VectorXd& s0,
                             const Eigen::MatrixXd& actions);

/// Flat-vector view of a shooting problem, z = [a_0, s_1, a_1, s_2, ..., a_{T-1}, s_T].
class ShootingNlp {
 public:
  explicit ShootingNlp(const ShootingProblem& problem);

  int num_variables() const { return horizon_ * (n_ + k_); }
  int num_constraints() const { return horizon_ * n_; }
  int horizon() const { return horizon_; }

  Eigen::VectorXd pack(const Eigen::MatrixXd& actions, const Eigen::MatrixXd& states) const;
  void unpack(const Eigen::VectorXd& z, Eigen::MatrixXd& actions, Eigen::MatrixXd& states) const;

  Eigen::VectorXd lower_bounds() const;
  Eigen::VectorXd upper_bounds() const;

  double objective(const Eigen::VectorXd& z, Eigen::VectorXd* gradient) const;

  struct ConstraintEval {
    Eigen::VectorXd values;                   // stacked c_1..c_T
    std::vector<Eigen::MatrixXd> dynamics_jacobians;  // d f / d [s; a] per stage
  };
  ConstraintEval constraints(const Eigen::VectorXd& z, bool with_jacobian) const;
  /// J_c^T v, using the stage Jacobians of `eval`.
  Eigen::VectorXd jacobian_transpose_product(const ConstraintEval& eval,
                                             const Eigen::VectorXd& v) const;
  Eigen::SparseMatrix<double> jacobian(const ConstraintEval& eval) const;

 private:
  const ShootingProblem& problem_;
  int horizon_;
  int n_;
  int k_;
};

/// Solves the problem from `init` (zero actions rolled out when absent).
/// Never throws on non-convergence: the best feasibility-restored iterate is
/// returned with converged = false.
ShootingSolution solve(const ShootingProblem& problem, const std::optional<WarmStart>& init = {},
                       const SolverOptions& options = {});

}  // namespace rhc
