// Acceptance suite: one PASS/FAIL line per criterion.
//
//   rhc_acceptance [criteria...] [--out DIR]
//
// With no criteria listed all nine run. The exit status is nonzero only when
// a criterion could not be evaluated (an exception escaped); a FAIL line is a
// measured result, not an error.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "rhc/acquisition.hpp"
#include "rhc/blr.hpp"
#include "rhc/config.hpp"
#include "rhc/eval.hpp"
#include "rhc/experiment.hpp"
#include "rhc/explorer.hpp"
#include "rhc/rff.hpp"
#include "rhc/trajopt.hpp"

namespace fs = std::filesystem;
using namespace rhc;

namespace {

// Tolerances and sizes.
constexpr double kUpdateRelTol = 1e-8;
constexpr double kEntropySlack = 1e-9;
constexpr double kGradRelTol = 1e-5;
constexpr double kFdStep = 1e-6;
constexpr double kLqrRelTol = 1e-4;
constexpr double kLqrViolationTol = 1e-4;
constexpr double kFinalBand = 0.2;      // nats below the oracle
constexpr double kThresholdBand = 0.5;  // nats below the oracle
constexpr double kUprightTol = 0.5;     // rad
constexpr double kSpearmanMax = -0.3;
constexpr int kMcEpisodes = 20;
constexpr int kMcSeeds = 10;
constexpr int kPendulumSeeds = 5;
constexpr int kPendulumRhcEpisodes = 10;
constexpr int kPendulumRandEpisodes = 20;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double scale = std::max(b.norm(), 1e-12);
  return (a - b).norm() / scale;
}

double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int rows, int cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// --- 1 -------------------------------------------------------------------

Outcome regression_correctness() {
  std::mt19937_64 rng(101);
  double worst = 0.0;
  int entropy_violations = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const int m = uniform_int(rng, 1, 50);
    const int n = uniform_int(rng, 1, 200);
    const int d = uniform_int(rng, 1, 5);
    const double alpha = std::pow(10.0, std::uniform_real_distribution<double>(-1, 1)(rng));
    const double beta = std::pow(10.0, std::uniform_real_distribution<double>(-1, 3)(rng));
    Dataset all{random_matrix(rng, n, m), random_matrix(rng, n, d)};
    const GaussianBelief prior = GaussianBelief::prior(m, d, alpha, beta);
    const GaussianBelief batch = posterior_update(prior, all);

    GaussianBelief seq = prior;
    double h = entropy(seq);
    int row = 0;
    while (row < n) {
      const int len = std::min(n - row, uniform_int(rng, 1, 20));
      Dataset chunk{all.features.middleRows(row, len), all.targets.middleRows(row, len)};
      seq = posterior_update(seq, chunk);
      const double h_next = entropy(seq);
      if (h_next > h + kEntropySlack * std::max(1.0, std::abs(h))) ++entropy_violations;
      h = h_next;
      row += len;
    }
    worst = std::max({worst, rel_err(seq.mean, batch.mean), rel_err(seq.precision, batch.precision)});
  }
  return {worst <= kUpdateRelTol && entropy_violations == 0,
          fmt::format("max rel err {:.2e} (tol {:.0e}), entropy increases {}", worst, kUpdateRelTol,
                      entropy_violations)};
}

// --- 2 -------------------------------------------------------------------

DynamicsModel random_model(std::mt19937_64& rng, int obs_dim, int action_dim, int m) {
  const int n = obs_dim + action_dim;
  const Eigen::VectorXd bw = Eigen::VectorXd::Constant(n, 1.5);
  TransitionSet data;
  const int rows = 3 * m;
  data.observations = random_matrix(rng, rows, obs_dim);
  data.actions = random_matrix(rng, rows, action_dim);
  data.next_observations = data.observations + 0.3 * random_matrix(rng, rows, obs_dim);
  return fit_model(sample_feature_map(n, m, bw, rng()), data, TargetMode::Delta, 1.0, 50.0);
}

// Central differences of an objective with respect to actions and states.
void fd_objective(const Objective& obj, const Eigen::VectorXd& s0, Eigen::MatrixXd actions,
                  Eigen::MatrixXd states, Eigen::MatrixXd& ga, Eigen::MatrixXd& gs) {
  ga.resize(actions.rows(), actions.cols());
  gs.resize(states.rows(), states.cols());
  auto f = [&]() { return obj.evaluate(s0, actions, states, nullptr, nullptr); };
  for (Eigen::Index i = 0; i < actions.size(); ++i) {
    const double keep = actions.data()[i];
    actions.data()[i] = keep + kFdStep;
    const double up = f();
    actions.data()[i] = keep - kFdStep;
    const double down = f();
    actions.data()[i] = keep;
    ga.data()[i] = (up - down) / (2 * kFdStep);
  }
  for (Eigen::Index i = 0; i < states.size(); ++i) {
    const double keep = states.data()[i];
    states.data()[i] = keep + kFdStep;
    const double up = f();
    states.data()[i] = keep - kFdStep;
    const double down = f();
    states.data()[i] = keep;
    gs.data()[i] = (up - down) / (2 * kFdStep);
  }
}

Outcome gradient_fidelity() {
  std::mt19937_64 rng(202);
  double worst_us = 0.0;
  double worst_evr = 0.0;
  double worst_jac = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    const int obs_dim = uniform_int(rng, 1, 3);
    const int action_dim = uniform_int(rng, 1, 2);
    const int m = uniform_int(rng, 2, 10);
    const int horizon = uniform_int(rng, 1, 5);
    const DynamicsModel model = random_model(rng, obs_dim, action_dim, m);
    const Eigen::VectorXd s0 = random_matrix(rng, obs_dim, 1);
    const Eigen::MatrixXd actions = random_matrix(rng, horizon, action_dim, 0.5);
    const Eigen::MatrixXd states = random_matrix(rng, horizon, obs_dim);

    const Eigen::VectorXd weights = random_matrix(rng, horizon, 1).cwiseAbs();
    const UncertaintySamplingObjective us(model, weights);
    const VarianceReductionObjective evr(model);
    for (const Objective* obj : {static_cast<const Objective*>(&us),
                                 static_cast<const Objective*>(&evr)}) {
      Eigen::MatrixXd ga;
      Eigen::MatrixXd gs;
      obj->evaluate(s0, actions, states, &ga, &gs);
      Eigen::MatrixXd fa;
      Eigen::MatrixXd fs;
      fd_objective(*obj, s0, actions, states, fa, fs);
      Eigen::MatrixXd both(1, ga.size() + gs.size());
      Eigen::MatrixXd fd(1, ga.size() + gs.size());
      both << ga.reshaped().transpose(), gs.reshaped().transpose();
      fd << fa.reshaped().transpose(), fs.reshaped().transpose();
      double& worst = obj == &us ? worst_us : worst_evr;
      worst = std::max(worst, rel_err(both, fd));
    }

    ShootingProblem problem;
    problem.s0 = s0;
    problem.horizon = horizon;
    problem.dynamics = std::make_shared<LearnedDynamics>(model);
    problem.objective = std::make_shared<UncertaintySamplingObjective>(model, weights);
    problem.action_low = Eigen::VectorXd::Constant(action_dim, -1.0);
    problem.action_high = Eigen::VectorXd::Constant(action_dim, 1.0);
    const ShootingNlp nlp(problem);
    Eigen::VectorXd z = nlp.pack(actions, states);
    const Eigen::MatrixXd analytic = Eigen::MatrixXd(nlp.jacobian(nlp.constraints(z, true)));
    Eigen::MatrixXd numeric(nlp.num_constraints(), nlp.num_variables());
    for (int i = 0; i < nlp.num_variables(); ++i) {
      const double keep = z[i];
      z[i] = keep + kFdStep;
      const Eigen::VectorXd up = nlp.constraints(z, false).values;
      z[i] = keep - kFdStep;
      const Eigen::VectorXd down = nlp.constraints(z, false).values;
      z[i] = keep;
      numeric.col(i) = (up - down) / (2 * kFdStep);
    }
    worst_jac = std::max(worst_jac, rel_err(analytic, numeric));
  }
  const double worst = std::max({worst_us, worst_evr, worst_jac});
  return {worst <= kGradRelTol,
          fmt::format("max rel err: US {:.2e}, EVR {:.2e}, constraints {:.2e} (tol {:.0e})",
                      worst_us, worst_evr, worst_jac, kGradRelTol)};
}

// --- 3 -------------------------------------------------------------------

struct Quadratic {
  Eigen::MatrixXd q;
  Eigen::MatrixXd r;
  Eigen::MatrixXd qf;
  template <class S>
  S stage(int, const Vec<S>& s, const Vec<S>& a) const {
    return form(q, s) + form(r, a);
  }
  template <class S>
  S terminal(const Vec<S>& s) const {
    return form(qf, s);
  }
  template <class S>
  static S form(const Eigen::MatrixXd& w, const Vec<S>& x) {
    S total(0.0);
    for (Eigen::Index i = 0; i < x.size(); ++i)
      for (Eigen::Index j = 0; j < x.size(); ++j) total += w(i, j) * x[i] * x[j];
    return total;
  }
};

Eigen::MatrixXd random_spd(std::mt19937_64& rng, int n) {
  const Eigen::MatrixXd g = random_matrix(rng, n, n);
  return g * g.transpose() / n + 0.5 * Eigen::MatrixXd::Identity(n, n);
}

Outcome optimizer_oracle() {
  std::mt19937_64 rng(303);
  double worst = 0.0;
  double worst_violation = 0.0;
  for (int inst = 0; inst < 10; ++inst) {
    const int n = uniform_int(rng, 1, 4);
    const int k = uniform_int(rng, 1, 2);
    const int horizon = uniform_int(rng, 2, 20);
    // Spectral radius drawn in [0.5, 1.05]: strongly unstable draws make the
    // optimum so flat along weakly controllable directions that action error
    // stops measuring the solver.
    Eigen::MatrixXd a = random_matrix(rng, n, n);
    const double radius = a.eigenvalues().cwiseAbs().maxCoeff();
    a *= std::uniform_real_distribution<double>(0.5, 1.05)(rng) / std::max(radius, 1e-12);
    const Eigen::MatrixXd b = random_matrix(rng, n, k);
    const Quadratic cost{random_spd(rng, n), random_spd(rng, k), random_spd(rng, n)};
    const Eigen::VectorXd s0 = random_matrix(rng, n, 1);

    // Riccati recursion for u_t = -K_t x_t.
    std::vector<Eigen::MatrixXd> gains(static_cast<std::size_t>(horizon));
    Eigen::MatrixXd p = cost.qf;
    for (int t = horizon - 1; t >= 0; --t) {
      const Eigen::MatrixXd gain =
          (cost.r + b.transpose() * p * b).ldlt().solve(b.transpose() * p * a);
      gains[static_cast<std::size_t>(t)] = gain;
      p = cost.q + a.transpose() * p * (a - b * gain);
    }
    Eigen::MatrixXd reference(horizon, k);
    Eigen::VectorXd x = s0;
    for (int t = 0; t < horizon; ++t) {
      const Eigen::VectorXd u = -gains[static_cast<std::size_t>(t)] * x;
      reference.row(t) = u.transpose();
      x = a * x + b * u;
    }

    ShootingProblem problem;
    problem.s0 = s0;
    problem.horizon = horizon;
    problem.dynamics = make_autodiff_dynamics(n, k, [a, b](const auto& s, const auto& u) {
      using S = typename std::decay_t<decltype(s)>::Scalar;
      Vec<S> next(s.size());
      for (Eigen::Index i = 0; i < s.size(); ++i) {
        S v(0.0);
        for (Eigen::Index j = 0; j < s.size(); ++j) v += a(i, j) * s[j];
        for (Eigen::Index j = 0; j < u.size(); ++j) v += b(i, j) * u[j];
        next[i] = v;
      }
      return next;
    });
    problem.objective = make_stage_objective(cost);
    // Inactive bounds at ten times the reference magnitude; the solver scales
    // actions by the half range, so the bounds also set that scale.
    const double bound = 10.0 * std::max(1.0, reference.cwiseAbs().maxCoeff());
    problem.action_low = Eigen::VectorXd::Constant(k, -bound);
    problem.action_high = Eigen::VectorXd::Constant(k, bound);
    SolverOptions options;
    options.gradient_tol = 1e-10;
    options.feasibility_tol = 1e-8;
    const ShootingSolution sol = solve(problem, std::nullopt, options);
    worst = std::max(worst, rel_err(sol.actions, reference));
    worst_violation = std::max(worst_violation, sol.stats.constraint_violation);
  }
  return {worst <= kLqrRelTol && worst_violation <= kLqrViolationTol,
          fmt::format("max rel err {:.2e} (tol {:.0e}), max violation {:.2e} (tol {:.0e})", worst,
                      kLqrRelTol, worst_violation, kLqrViolationTol)};
}

// --- 4 -------------------------------------------------------------------

Outcome evr_us_consistency() {
  std::mt19937_64 rng(404);
  int mismatches = 0;
  constexpr int kGrid = 201;
  for (int inst = 0; inst < 50; ++inst) {
    const int obs_dim = uniform_int(rng, 1, 3);
    const DynamicsModel model = random_model(rng, obs_dim, 1, 1);
    const Eigen::VectorXd s0 = random_matrix(rng, obs_dim, 1);
    const Eigen::MatrixXd states = Eigen::MatrixXd::Zero(1, obs_dim);
    std::vector<double> us(kGrid);
    std::vector<double> reduction(kGrid);
    const double h_before = entropy(model.belief);
    for (int g = 0; g < kGrid; ++g) {
      Eigen::MatrixXd action(1, 1);
      action(0, 0) = -2.0 + 4.0 * g / (kGrid - 1);
      us[static_cast<std::size_t>(g)] = us_objective(model, s0, action, states);
      reduction[static_cast<std::size_t>(g)] = h_before - evr_objective(model, s0, action, states);
    }
    const auto us_best = std::max_element(us.begin(), us.end()) - us.begin();
    const auto red_best = std::max_element(reduction.begin(), reduction.end()) - reduction.begin();
    // Grid points tied in value count as the same argmax.
    const double us_gap = us[static_cast<std::size_t>(us_best)] - us[static_cast<std::size_t>(red_best)];
    const double red_gap = reduction[static_cast<std::size_t>(red_best)] -
                           reduction[static_cast<std::size_t>(us_best)];
    const bool same = us_best == red_best ||
                      (us_gap <= 1e-12 * std::abs(us[static_cast<std::size_t>(us_best)]) &&
                       red_gap <= 1e-12 * std::abs(reduction[static_cast<std::size_t>(red_best)]));
    if (!same) ++mismatches;
  }
  return {mismatches == 0, fmt::format("{} of 50 argmax mismatches", mismatches)};
}

// --- 5, 7, 8, 9 -----------------------------------------------------------

std::string seed_list(int count) { return fmt::format("0-{}", count - 1); }

ExperimentResult run_fresh(const std::string& text, const fs::path& dir) {
  fs::remove_all(dir);
  ExperimentConfig config = parse_config(text);
  config.output_dir = dir.string();
  return run_experiment(config, text);
}

struct McRuns {
  std::map<std::string, std::map<std::uint64_t, std::vector<double>>> curves;  // method, seed
  std::map<std::string, std::map<std::uint64_t, double>> downstream;
  std::map<std::uint64_t, double> oracle;
};

McRuns collect(const ExperimentResult& result) {
  McRuns out;
  for (const MetricsRow& row : result.rows) {
    auto& curve = out.curves[row.method][row.seed];
    curve.resize(static_cast<std::size_t>(std::max<int>(row.episode, static_cast<int>(curve.size()))));
    curve[static_cast<std::size_t>(row.episode - 1)] = row.mean_log_lik;
    if (row.downstream_cost) out.downstream[row.method][row.seed] = *row.downstream_cost;
  }
  for (const OracleRow& o : result.oracle) out.oracle[o.seed] = o.mean_log_lik;
  return out;
}

// Episodes to come within `band` of the seed's oracle; never reaching counts
// as one past the budget.
std::vector<double> episodes_within(const McRuns& runs, const std::string& method, double band) {
  std::vector<double> out;
  for (const auto& [seed, curve] : runs.curves.at(method)) {
    const int e = episodes_to_threshold(curve, runs.oracle.at(seed) - band);
    out.push_back(e == 0 ? static_cast<double>(curve.size() + 1) : static_cast<double>(e));
  }
  return out;
}

class MountainCarSuite {
 public:
  explicit MountainCarSuite(fs::path root) : root_(std::move(root)) {}

  const McRuns& us_rand() {
    if (!us_rand_) {
      const std::string text = fmt::format(
          "env = mountaincar\nmethod = rhc-us, rand\nseeds = {}\nepisodes = {}\n"
          "rff.features = 20\neval.downstream = final\n",
          seed_list(kMcSeeds), kMcEpisodes);
      us_rand_ = collect(run_fresh(text, root_ / "mountaincar_us_rand"));
    }
    return *us_rand_;
  }

  const McRuns& evr() {
    if (!evr_) {
      const std::string text = fmt::format(
          "env = mountaincar\nmethod = rhc-evr\nseeds = {}\nepisodes = {}\n"
          "rff.features = 20\neval.downstream = none\n",
          seed_list(kMcSeeds), kMcEpisodes);
      evr_ = collect(run_fresh(text, root_ / "mountaincar_evr"));
    }
    return *evr_;
  }

 private:
  fs::path root_;
  std::optional<McRuns> us_rand_;
  std::optional<McRuns> evr_;
};

Outcome exploration_efficacy(MountainCarSuite& suite) {
  const McRuns& runs = suite.us_rand();
  std::vector<double> gaps;
  std::vector<double> oracles;
  for (const auto& [seed, curve] : runs.curves.at("rhc-us")) {
    gaps.push_back(runs.oracle.at(seed) - curve.back());
    oracles.push_back(runs.oracle.at(seed));
  }
  const double gap = median(gaps);
  const double us_eps = median(episodes_within(runs, "rhc-us", kThresholdBand));
  const double rand_eps = median(episodes_within(runs, "rand", kThresholdBand));
  std::vector<double> rand_final;
  for (const auto& [seed, curve] : runs.curves.at("rand")) rand_final.push_back(curve.back());
  const bool pass = gap <= kFinalBand && us_eps < rand_eps;
  return {pass,
          fmt::format("median oracle {:.3f}; RHC-US final median gap {:.3f} nats (tol {}); "
                      "RAND final median {:.3f}; median episodes to {}-nat band: RHC-US {}, "
                      "RAND {} ({} = never)",
                      median(oracles), gap, kFinalBand, median(rand_final), kThresholdBand, us_eps,
                      rand_eps, kMcEpisodes + 1)};
}

Outcome downstream_linkage(MountainCarSuite& suite) {
  const McRuns& runs = suite.us_rand();
  std::vector<double> lik;
  std::vector<double> cost;
  for (const std::string method : {"rhc-us", "rand"}) {
    for (const auto& [seed, curve] : runs.curves.at(method)) {
      lik.push_back(curve.back());
      cost.push_back(runs.downstream.at(method).at(seed));
    }
  }
  const double rho = spearman(lik, cost);
  return {rho <= kSpearmanMax,
          fmt::format("Spearman rho {:.3f} over {} runs (need <= {})", rho, lik.size(),
                      kSpearmanMax)};
}

Outcome evr_gate(MountainCarSuite& suite) {
  const McRuns& evr = suite.evr();
  const McRuns& us = suite.us_rand();
  McRuns joined = evr;
  joined.oracle = us.oracle;
  bool complete = true;
  for (const auto& [seed, curve] : evr.curves.at("rhc-evr")) {
    complete = complete && static_cast<int>(curve.size()) == kMcEpisodes;
  }
  const double evr_eps = median(episodes_within(joined, "rhc-evr", kThresholdBand));
  const double us_eps = median(episodes_within(us, "rhc-us", kThresholdBand));
  // Both never reaching the band is not evidence of faster convergence.
  const bool pass = complete && evr_eps <= kMcEpisodes && evr_eps <= us_eps;
  return {pass, fmt::format("completed {}; median episodes to {}-nat band: RHC-EVR {}, RHC-US {} "
                            "({} = never)",
                            complete ? "yes" : "no", kThresholdBand, evr_eps, us_eps,
                            kMcEpisodes + 1)};
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism(const fs::path& root) {
  const std::string text =
      "env = mountaincar, pendulum\nmethod = rhc-us, rand\nseeds = 0-1\nepisodes = 3\n"
      "eval.downstream = final\neval.oracle_samples = 2000\n";
  const ExperimentResult a = run_fresh(text, root / "determinism_a");
  const ExperimentResult b = run_fresh(text, root / "determinism_b");
  const std::string ma = slurp(a.experiment_dir / "metrics.csv");
  const std::string mb = slurp(b.experiment_dir / "metrics.csv");
  int differing_runs = 0;
  for (std::size_t i = 0; i < a.run_dirs.size() && i < b.run_dirs.size(); ++i) {
    if (slurp(a.run_dirs[i] / "metrics.csv") != slurp(b.run_dirs[i] / "metrics.csv")) ++differing_runs;
  }
  const bool pass = !ma.empty() && ma == mb && differing_runs == 0 &&
                    a.run_dirs.size() == b.run_dirs.size();
  return {pass, fmt::format("aggregate metrics {} ({} bytes), {} of {} per-run files differ",
                            ma == mb ? "identical" : "differ", ma.size(), differing_runs,
                            a.run_dirs.size())};
}

// --- 6 -------------------------------------------------------------------

// 1-based first episode with a step within kUprightTol of upright, or
// episodes + 1 when none.
double episodes_to_upright(const ExplorationRun& run) {
  for (int e = 0; e < run.num_episodes(); ++e) {
    const Eigen::MatrixXd& obs = run.episodes[static_cast<std::size_t>(e)].observations;
    for (Eigen::Index t = 0; t < obs.rows(); ++t) {
      if (std::abs(std::atan2(obs(t, 1), obs(t, 0))) < kUprightTol) return e + 1;
    }
  }
  return run.num_episodes() + 1;
}

Outcome pendulum_swing_up() {
  const ExperimentConfig config = parse_config("env = pendulum\n");
  const EnvSpec& env = config.env(EnvId::Pendulum);
  std::vector<double> rhc_eps;
  std::vector<double> rand_eps;
  for (std::uint64_t seed = 0; seed < kPendulumSeeds; ++seed) {
    rhc_eps.push_back(episodes_to_upright(
        run_rhc(env, config.explorer_for(EnvId::Pendulum, Method::RhcUs), kPendulumRhcEpisodes, seed)));
    rand_eps.push_back(episodes_to_upright(run_random(
        env, config.explorer_for(EnvId::Pendulum, Method::Rand), kPendulumRandEpisodes, seed)));
  }
  const double rhc = median(rhc_eps);
  const double rnd = median(rand_eps);
  return {rhc <= kPendulumRhcEpisodes && rnd > kPendulumRandEpisodes,
          fmt::format("median first episode within {} rad of upright: RHC-US {} (need <= {}), "
                      "RAND {} (need > {}); per seed RHC-US [{}]",
                      kUprightTol, rhc, kPendulumRhcEpisodes, rnd, kPendulumRandEpisodes,
                      fmt::join(rhc_eps, ", "))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> selected;
  std::string out = "acceptance_runs";
  app.add_option("criteria", selected, "criteria to run (default: all)")
      ->check(CLI::Range(1, 9));
  std::string report_path;
  app.add_option("--out", out, "scratch directory for experiment outputs");
  app.add_option("--report", report_path, "also write the result lines to this file");
  CLI11_PARSE(app, argc, argv);
  std::ofstream report;
  if (!report_path.empty()) report.open(report_path, std::ios::trunc);
  auto emit = [&](const std::string& line) {
    fmt::print("{}", line);
    std::fflush(stdout);
    if (report.is_open()) report << line << std::flush;
  };
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  const std::set<int> wanted(selected.begin(), selected.end());

  const fs::path root = fs::absolute(out);
  MountainCarSuite suite(root);
  const std::map<int, std::pair<std::string, std::function<Outcome()>>> criteria{
      {1, {"regression correctness", regression_correctness}},
      {2, {"gradient fidelity", gradient_fidelity}},
      {3, {"optimizer oracle", optimizer_oracle}},
      {4, {"EVR/US consistency", evr_us_consistency}},
      {5, {"exploration efficacy", [&] { return exploration_efficacy(suite); }}},
      {6, {"pendulum swing-up", pendulum_swing_up}},
      {7, {"downstream linkage", [&] { return downstream_linkage(suite); }}},
      {8, {"EVR tractability", [&] { return evr_gate(suite); }}},
      {9, {"determinism", [&] { return determinism(root); }}},
  };

  int passed = 0;
  int errors = 0;
  for (int id : wanted) {
    const auto& [name, check] = criteria.at(id);
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    bool error = false;
    try {
      outcome = check();
    } catch (const std::exception& e) {
      outcome.detail = fmt::format("error: {}", e.what());
      error = true;
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    emit(fmt::format("criterion {} {}: {} | {} | {:.1f} s\n", id, name,
                     error ? "ERROR" : (outcome.pass ? "PASS" : "FAIL"), outcome.detail, secs));
    passed += outcome.pass ? 1 : 0;
    errors += error ? 1 : 0;
  }
  emit(fmt::format("{} of {} criteria passed\n", passed, wanted.size()));
  return errors == 0 ? 0 : 1;
}
