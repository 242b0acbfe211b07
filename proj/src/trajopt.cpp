#include "rhc/trajopt.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <fstream>
#include <functional>
#include <limits>

#include <fmt/format.h>

namespace rhc {

Eigen::MatrixXd rollout_mean(const Dynamics& dynamics, const Eigen::VectorXd& s0,
                             const Eigen::MatrixXd& actions) {
  if (s0.size() != dynamics.state_dim() || actions.cols() != dynamics.action_dim()) {
    throw InvalidInput("rollout dimensions do not match the dynamics");
  }
  if (!s0.allFinite() || !actions.allFinite()) throw InvalidInput("non-finite rollout input");
  Eigen::MatrixXd states(actions.rows(), s0.size());
  Eigen::VectorXd s = s0;
  for (Eigen::Index t = 0; t < actions.rows(); ++t) {
    s = dynamics.next(s, actions.row(t).transpose());
    if (!s.allFinite()) {
      throw NumericalError(fmt::format("rollout produced non-finite state at step {}", t + 1));
    }
    states.row(t) = s.transpose();
  }
  return states;
}

ShootingNlp::ShootingNlp(const ShootingProblem& problem)
    : problem_(problem), horizon_(problem.horizon) {
  if (!problem.dynamics || !problem.objective) {
    throw InvalidInput("shooting problem needs dynamics and an objective");
  }
  if (horizon_ < 1) throw InvalidInput("horizon must be at least 1");
  n_ = problem.dynamics->state_dim();
  k_ = problem.dynamics->action_dim();
  if (problem.s0.size() != n_) throw InvalidInput("s0 does not match the state dimension");
  if (problem.action_low.size() != k_ || problem.action_high.size() != k_) {
    throw InvalidInput("action bounds do not match the action dimension");
  }
  if (!(problem.action_low.array() <= problem.action_high.array()).all()) {
    throw InvalidInput("action_low exceeds action_high");
  }
  if (problem.state_low.size() != 0 && problem.state_low.size() != n_) {
    throw InvalidInput("state_low does not match the state dimension");
  }
  if (problem.state_high.size() != 0 && problem.state_high.size() != n_) {
    throw InvalidInput("state_high does not match the state dimension");
  }
  if (problem.state_scale.size() != 0 &&
      (problem.state_scale.size() != n_ || !(problem.state_scale.array() > 0.0).all())) {
    throw InvalidInput("state_scale must be positive with one entry per state");
  }
}

Eigen::VectorXd ShootingNlp::pack(const Eigen::MatrixXd& actions,
                                  const Eigen::MatrixXd& states) const {
  const int b = n_ + k_;
  Eigen::VectorXd z(num_variables());
  for (int t = 0; t < horizon_; ++t) {
    z.segment(t * b, k_) = actions.row(t).transpose();
    z.segment(t * b + k_, n_) = states.row(t).transpose();
  }
  return z;
}

void ShootingNlp::unpack(const Eigen::VectorXd& z, Eigen::MatrixXd& actions,
                         Eigen::MatrixXd& states) const {
  const int b = n_ + k_;
  actions.resize(horizon_, k_);
  states.resize(horizon_, n_);
  for (int t = 0; t < horizon_; ++t) {
    actions.row(t) = z.segment(t * b, k_).transpose();
    states.row(t) = z.segment(t * b + k_, n_).transpose();
  }
}

Eigen::VectorXd ShootingNlp::lower_bounds() const {
  const double inf = std::numeric_limits<double>::infinity();
  Eigen::VectorXd lo(num_variables());
  const int b = n_ + k_;
  for (int t = 0; t < horizon_; ++t) {
    lo.segment(t * b, k_) = problem_.action_low;
    lo.segment(t * b + k_, n_) = problem_.state_low.size() ? problem_.state_low
                                                            : Eigen::VectorXd::Constant(n_, -inf);
  }
  return lo;
}

Eigen::VectorXd ShootingNlp::upper_bounds() const {
  const double inf = std::numeric_limits<double>::infinity();
  Eigen::VectorXd hi(num_variables());
  const int b = n_ + k_;
  for (int t = 0; t < horizon_; ++t) {
    hi.segment(t * b, k_) = problem_.action_high;
    hi.segment(t * b + k_, n_) = problem_.state_high.size() ? problem_.state_high
                                                             : Eigen::VectorXd::Constant(n_, inf);
  }
  return hi;
}

double ShootingNlp::objective(const Eigen::VectorXd& z, Eigen::VectorXd* gradient) const {
  Eigen::MatrixXd actions;
  Eigen::MatrixXd states;
  unpack(z, actions, states);
  if (gradient == nullptr) {
    return problem_.objective->evaluate(problem_.s0, actions, states, nullptr, nullptr);
  }
  Eigen::MatrixXd ga;
  Eigen::MatrixXd gs;
  const double value = problem_.objective->evaluate(problem_.s0, actions, states, &ga, &gs);
  *gradient = pack(ga, gs);
  return value;
}

ShootingNlp::ConstraintEval ShootingNlp::constraints(const Eigen::VectorXd& z,
                                                     bool with_jacobian) const {
  const int b = n_ + k_;
  ConstraintEval eval;
  eval.values.resize(num_constraints());
  if (with_jacobian) eval.dynamics_jacobians.resize(static_cast<std::size_t>(horizon_));
  for (int t = 0; t < horizon_; ++t) {
    const Eigen::VectorXd s_prev = t == 0 ? problem_.s0 : Eigen::VectorXd(z.segment((t - 1) * b + k_, n_));
    const Eigen::VectorXd a_prev = z.segment(t * b, k_);
    const Eigen::VectorXd f =
        with_jacobian
            ? problem_.dynamics->next(s_prev, a_prev, eval.dynamics_jacobians[static_cast<std::size_t>(t)])
            : problem_.dynamics->next(s_prev, a_prev);
    eval.values.segment(t * n_, n_) = z.segment(t * b + k_, n_) - f;
  }
  return eval;
}

Eigen::VectorXd ShootingNlp::jacobian_transpose_product(const ConstraintEval& eval,
                                                        const Eigen::VectorXd& v) const {
  const int b = n_ + k_;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(num_variables());
  for (int t = 0; t < horizon_; ++t) {
    const Eigen::MatrixXd& jac = eval.dynamics_jacobians[static_cast<std::size_t>(t)];
    const auto vt = v.segment(t * n_, n_);
    out.segment(t * b + k_, n_) += vt;  // d c_t / d s_t = I
    out.segment(t * b, k_) -= jac.rightCols(k_).transpose() * vt;
    if (t > 0) out.segment((t - 1) * b + k_, n_) -= jac.leftCols(n_).transpose() * vt;
  }
  return out;
}

Eigen::SparseMatrix<double> ShootingNlp::jacobian(const ConstraintEval& eval) const {
  const int b = n_ + k_;
  std::vector<Eigen::Triplet<double>> entries;
  for (int t = 0; t < horizon_; ++t) {
    const Eigen::MatrixXd& jac = eval.dynamics_jacobians[static_cast<std::size_t>(t)];
    for (int i = 0; i < n_; ++i) {
      const int row = t * n_ + i;
      entries.emplace_back(row, t * b + k_ + i, 1.0);
      for (int j = 0; j < k_; ++j) entries.emplace_back(row, t * b + j, -jac(i, n_ + j));
      if (t > 0) {
        for (int j = 0; j < n_; ++j) entries.emplace_back(row, (t - 1) * b + k_ + j, -jac(i, j));
      }
    }
  }
  Eigen::SparseMatrix<double> out(num_constraints(), num_variables());
  out.setFromTriplets(entries.begin(), entries.end());
  return out;
}

namespace {

using ValueGradient = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct InnerResult {
  int iterations = 0;
  bool converged = false;
};

Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& lo,
                        const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

// Projected L-BFGS on a box. The two-loop recursion runs on the free
// variables only; variables held at a bound by the gradient are frozen for
// the current step.
InnerResult minimize_box(const ValueGradient& fg, Eigen::VectorXd& x, const Eigen::VectorXd& lo,
                         const Eigen::VectorXd& hi, int max_iter, double grad_tol, int memory) {
  InnerResult result;
  x = project(x, lo, hi);
  Eigen::VectorXd g;
  double f = fg(x, g);
  if (!std::isfinite(f) || !g.allFinite()) {
    throw NumericalError("non-finite objective or gradient at the starting point");
  }

  std::deque<Eigen::VectorXd> s_hist;
  std::deque<Eigen::VectorXd> y_hist;
  const Eigen::Index dim = x.size();
  Eigen::ArrayXd free(dim);
  int stalls = 0;

  for (int iter = 0; iter < max_iter; ++iter) {
    const Eigen::VectorXd pg = x - project(x - g, lo, hi);
    if (pg.lpNorm<Eigen::Infinity>() <= grad_tol * std::max(1.0, std::abs(f))) {
      result.converged = true;
      break;
    }
    for (Eigen::Index i = 0; i < dim; ++i) {
      const bool at_lo = x[i] <= lo[i] && g[i] > 0.0;
      const bool at_hi = x[i] >= hi[i] && g[i] < 0.0;
      free[i] = (at_lo || at_hi) ? 0.0 : 1.0;
    }
    const Eigen::VectorXd gf = (g.array() * free).matrix();

    // Two-loop recursion.
    Eigen::VectorXd q = gf;
    const std::size_t mem = s_hist.size();
    std::vector<double> alpha(mem);
    std::vector<double> rho(mem);
    for (std::size_t i = mem; i-- > 0;) {
      const Eigen::VectorXd si = (s_hist[i].array() * free).matrix();
      const Eigen::VectorXd yi = (y_hist[i].array() * free).matrix();
      const double sy = si.dot(yi);
      rho[i] = sy > 1e-300 ? 1.0 / sy : 0.0;
      alpha[i] = rho[i] * si.dot(q);
      q -= alpha[i] * yi;
    }
    double gamma = 1.0;
    if (mem > 0) {
      const Eigen::VectorXd yl = (y_hist.back().array() * free).matrix();
      const double yy = yl.squaredNorm();
      const double sy = (s_hist.back().array() * free).matrix().dot(yl);
      if (yy > 0.0 && sy > 0.0) gamma = sy / yy;
    } else {
      gamma = 1.0 / std::max(1.0, gf.lpNorm<Eigen::Infinity>());
    }
    Eigen::VectorXd d = gamma * q;
    for (std::size_t i = 0; i < mem; ++i) {
      const Eigen::VectorXd si = (s_hist[i].array() * free).matrix();
      const Eigen::VectorXd yi = (y_hist[i].array() * free).matrix();
      const double beta = rho[i] * yi.dot(d);
      d += (alpha[i] - beta) * si;
    }
    d = -(d.array() * free).matrix();
    if (!(g.dot(d) < 0.0) || !d.allFinite()) {
      s_hist.clear();
      y_hist.clear();
      d = -gf / std::max(1.0, gf.lpNorm<Eigen::Infinity>());
    }

    // Backtracking Armijo search along the projected path.
    double step = 1.0;
    Eigen::VectorXd x_new;
    Eigen::VectorXd g_new;
    double f_new = f;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = project(x + step * d, lo, hi);
      f_new = fg(x_new, g_new);
      if (std::isfinite(f_new) && g_new.allFinite() && f_new <= f + 1e-4 * g.dot(x_new - x)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    ++result.iterations;
    if (!accepted) {
      if (s_hist.empty()) break;  // steepest descent failed too
      s_hist.clear();
      y_hist.clear();
      continue;
    }

    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = g_new - g;
    if (s.dot(y) > 1e-12 * y.squaredNorm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      if (static_cast<int>(s_hist.size()) > memory) {
        s_hist.pop_front();
        y_hist.pop_front();
      }
    }
    const double decrease = f - f_new;
    x = x_new;
    g = g_new;
    f = f_new;
    stalls = decrease <= 1e-15 * std::max(1.0, std::abs(f)) ? stalls + 1 : 0;
    if (stalls >= 5) break;
  }
  return result;
}

// Objective of the actions alone, states rolled out under the dynamics, with
// the gradient by the adjoint recursion. Returns +inf when the rollout fails.
double single_shooting(const ShootingProblem& problem, const Eigen::MatrixXd& actions,
                       Eigen::MatrixXd* grad) {
  const int horizon = problem.horizon;
  const int n = problem.dynamics->state_dim();
  Eigen::MatrixXd states(horizon, n);
  std::vector<Eigen::MatrixXd> jac(static_cast<std::size_t>(grad ? horizon : 0));
  Eigen::VectorXd s = problem.s0;
  for (int t = 0; t < horizon; ++t) {
    const Eigen::VectorXd a = actions.row(t).transpose();
    s = grad ? problem.dynamics->next(s, a, jac[static_cast<std::size_t>(t)])
             : problem.dynamics->next(s, a);
    if (!s.allFinite()) return std::numeric_limits<double>::infinity();
    states.row(t) = s.transpose();
  }
  if (!grad) return problem.objective->evaluate(problem.s0, actions, states, nullptr, nullptr);
  Eigen::MatrixXd ga;
  Eigen::MatrixXd gs;
  const double f = problem.objective->evaluate(problem.s0, actions, states, &ga, &gs);
  Eigen::VectorXd lambda = gs.row(horizon - 1).transpose();
  for (int t = horizon - 1; t >= 0; --t) {
    const Eigen::MatrixXd& j = jac[static_cast<std::size_t>(t)];
    ga.row(t) += (j.rightCols(j.cols() - n).transpose() * lambda).transpose();
    if (t > 0) lambda = gs.row(t - 1).transpose() + j.leftCols(n).transpose() * lambda;
  }
  *grad = std::move(ga);
  return f;
}

}  // namespace

ShootingSolution solve(const ShootingProblem& problem, const std::optional<WarmStart>& init,
                       const SolverOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const ShootingNlp nlp(problem);
  const int horizon = problem.horizon;
  const int n = problem.dynamics->state_dim();
  const int k = problem.dynamics->action_dim();
  const int b = n + k;

  // Initialization.
  Eigen::MatrixXd init_actions = Eigen::MatrixXd::Zero(horizon, k);
  Eigen::MatrixXd init_states;
  if (init) {
    if (init->actions.rows() != horizon || init->actions.cols() != k) {
      throw InvalidInput("warm-start actions have the wrong shape");
    }
    init_actions = init->actions;
    if (init->states.size() != 0) {
      if (init->states.rows() != horizon || init->states.cols() != n) {
        throw InvalidInput("warm-start states have the wrong shape");
      }
      init_states = init->states;
    }
  }
  for (int t = 0; t < horizon; ++t) {
    init_actions.row(t) = init_actions.row(t)
                              .cwiseMax(problem.action_low.transpose())
                              .cwiseMin(problem.action_high.transpose());
  }
  const Eigen::MatrixXd init_rollout = rollout_mean(*problem.dynamics, problem.s0, init_actions);
  if (init_states.size() == 0) init_states = init_rollout;

  // Variable scaling: actions by their half range, states by state_scale.
  Eigen::VectorXd scale(nlp.num_variables());
  const Eigen::VectorXd state_scale =
      problem.state_scale.size() ? problem.state_scale : Eigen::VectorXd::Ones(n);
  Eigen::VectorXd action_scale = 0.5 * (problem.action_high - problem.action_low);
  for (int j = 0; j < k; ++j) {
    if (!std::isfinite(action_scale[j]) || action_scale[j] <= 0.0) action_scale[j] = 1.0;
  }
  for (int t = 0; t < horizon; ++t) {
    scale.segment(t * b, k) = action_scale;
    scale.segment(t * b + k, n) = state_scale;
  }
  Eigen::VectorXd constraint_scale(nlp.num_constraints());
  for (int t = 0; t < horizon; ++t) constraint_scale.segment(t * n, n) = state_scale;

  const Eigen::VectorXd lo = nlp.lower_bounds().cwiseQuotient(scale);
  const Eigen::VectorXd hi = nlp.upper_bounds().cwiseQuotient(scale);
  Eigen::VectorXd y = nlp.pack(init_actions, init_states).cwiseQuotient(scale);

  const double init_objective =
      problem.objective->evaluate(problem.s0, init_actions, init_rollout, nullptr, nullptr);
  // The penalty is relative to the objective's magnitude, tracked across
  // outer iterations since a poor start can be orders of magnitude off.
  double objective_scale = 1.0 / std::max(1.0, std::abs(init_objective));

  Eigen::VectorXd multipliers = Eigen::VectorXd::Zero(nlp.num_constraints());
  double penalty = options.penalty_init;

  auto lagrangian = [&](const Eigen::VectorXd& yv, Eigen::VectorXd& grad) {
    const Eigen::VectorXd z = yv.cwiseProduct(scale);
    Eigen::VectorXd g_obj;
    double f = nlp.objective(z, &g_obj);
    f *= objective_scale;
    g_obj *= objective_scale;
    const auto eval = nlp.constraints(z, true);
    const Eigen::VectorXd c = eval.values.cwiseQuotient(constraint_scale);
    const Eigen::VectorXd w = (multipliers + penalty * c).cwiseQuotient(constraint_scale);
    grad = (g_obj + nlp.jacobian_transpose_product(eval, w)).cwiseProduct(scale);
    return f + multipliers.dot(c) + 0.5 * penalty * c.squaredNorm();
  };

  std::ofstream trace;
  if (!options.trace_path.empty()) {
    trace.open(options.trace_path);
    trace << "outer,inner_iterations,objective,violation,penalty\n";
  }

  SolveStats stats;
  double prev_violation = std::numeric_limits<double>::infinity();
  for (int outer = 0; outer < options.max_outer; ++outer) {
    const InnerResult inner = minimize_box(lagrangian, y, lo, hi, options.max_inner,
                                           options.gradient_tol, options.memory);
    stats.iterations += inner.iterations;
    stats.outer_iterations = outer + 1;

    const Eigen::VectorXd z = y.cwiseProduct(scale);
    const Eigen::VectorXd defects = nlp.constraints(z, false).values;
    const double violation = defects.lpNorm<Eigen::Infinity>();
    stats.constraint_violation = violation;
    if (trace.is_open()) {
      trace << fmt::format("{},{},{},{},{}\n", outer, inner.iterations, nlp.objective(z, nullptr),
                           violation, penalty);
    }
    if (violation <= options.feasibility_tol && inner.converged) {
      stats.converged = true;
      break;
    }
    multipliers += penalty * defects.cwiseQuotient(constraint_scale);
    const double rescaled = 1.0 / std::max(1.0, std::abs(nlp.objective(z, nullptr)));
    if (rescaled > 10.0 * objective_scale || rescaled < 0.1 * objective_scale) {
      multipliers *= rescaled / objective_scale;
      objective_scale = rescaled;
    }
    if (violation > 0.25 * prev_violation) {
      penalty = std::min(penalty * options.penalty_growth, options.penalty_max);
    }
    prev_violation = violation;
  }

  // Feasibility restoration: the returned states are the rollout of the
  // returned actions under the model.
  Eigen::MatrixXd actions;
  Eigen::MatrixXd states;
  nlp.unpack(y.cwiseProduct(scale), actions, states);
  for (int t = 0; t < horizon; ++t) {
    actions.row(t) =
        actions.row(t).cwiseMax(problem.action_low.transpose()).cwiseMin(problem.action_high.transpose());
  }

  // Single-shooting polish on the actions removes the remaining defects
  // without moving away from the multiple-shooting solution's basin.
  const bool has_state_bounds = problem.state_low.size() != 0 || problem.state_high.size() != 0;
  if (options.polish_iterations > 0 && !has_state_bounds) {
    Eigen::VectorXd a_lo(horizon * k);
    Eigen::VectorXd a_hi(horizon * k);
    Eigen::VectorXd a_scale(horizon * k);
    Eigen::VectorXd x(horizon * k);
    for (int t = 0; t < horizon; ++t) {
      a_scale.segment(t * k, k) = action_scale;
      a_lo.segment(t * k, k) = problem.action_low.cwiseQuotient(action_scale);
      a_hi.segment(t * k, k) = problem.action_high.cwiseQuotient(action_scale);
      x.segment(t * k, k) = actions.row(t).transpose().cwiseQuotient(action_scale);
    }
    auto as_matrix = [&](const Eigen::VectorXd& xv) {
      Eigen::MatrixXd m(horizon, k);
      for (int t = 0; t < horizon; ++t) {
        m.row(t) = xv.segment(t * k, k).cwiseProduct(action_scale).transpose();
      }
      return m;
    };
    auto shooting = [&](const Eigen::VectorXd& xv, Eigen::VectorXd& grad) {
      Eigen::MatrixXd g;
      const double f = single_shooting(problem, as_matrix(xv), &g);
      grad.resize(horizon * k);
      if (!std::isfinite(f)) {
        grad.setZero();
        return f;
      }
      for (int t = 0; t < horizon; ++t) grad.segment(t * k, k) = g.row(t).transpose();
      grad = grad.cwiseProduct(a_scale) * objective_scale;
      return f * objective_scale;
    };
    if (std::isfinite(single_shooting(problem, as_matrix(x), nullptr))) {
      const InnerResult polish = minimize_box(shooting, x, a_lo, a_hi, options.polish_iterations,
                                              options.gradient_tol, options.memory);
      stats.iterations += polish.iterations;
      if (polish.converged) stats.converged = true;
      actions = as_matrix(x);
    }
  }

  ShootingSolution out;
  double final_objective = std::numeric_limits<double>::infinity();
  try {
    states = rollout_mean(*problem.dynamics, problem.s0, actions);
    final_objective = problem.objective->evaluate(problem.s0, actions, states, nullptr, nullptr);
  } catch (const NumericalError&) {
    final_objective = std::numeric_limits<double>::infinity();
  }
  if (std::isfinite(final_objective) && final_objective <= init_objective) {
    out.actions = std::move(actions);
    out.states = std::move(states);
    stats.objective = final_objective;
  } else {
    out.actions = init_actions;
    out.states = init_rollout;
    stats.objective = init_objective;
    stats.converged = false;
    stats.fell_back_to_init = true;
  }
  stats.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.stats = stats;
  return out;
}

}  // namespace rhc
