// Command-line front end: run experiments, evaluate snapshots, export plot
// data and compute oracle likelihoods.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "rhc/config.hpp"
#include "rhc/eval.hpp"
#include "rhc/experiment.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string env;
  std::string method;
  std::string seeds;
  int episodes = 0;
  std::string out;
  std::vector<std::string> settings;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Configuration file (key = value lines)");
  cmd->add_option("--env", args.env, "Environment(s): mountaincar, pendulum, cartpole");
  cmd->add_option("--method", args.method, "Method(s): rhc-us, rhc-evr, rand");
  cmd->add_option("--seeds", args.seeds, "Seeds, e.g. 0,1,2 or 0-9");
  cmd->add_option("--episodes", args.episodes, "Episodes per run");
  cmd->add_option("--out", args.out, "Output root (default $RHC_OUTPUT_ROOT or ./runs)");
  cmd->add_option("--set", args.settings, "Extra key=value setting, repeatable");
}

// Configuration text: the file followed by command-line settings, so the
// stored snapshot parses back to the same configuration.
std::string config_text(const CommonArgs& args) {
  std::string text;
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in) throw rhc::ConfigError(fmt::format("cannot read config file '{}'", args.config_path));
    std::stringstream buffer;
    buffer << in.rdbuf();
    text = buffer.str();
    if (!text.empty() && text.back() != '\n') text += '\n';
  }
  std::string overrides;
  auto add = [&](std::string_view key, const std::string& value) {
    if (!value.empty()) overrides += fmt::format("{} = {}\n", key, value);
  };
  add("env", args.env);
  add("method", args.method);
  add("seeds", args.seeds);
  if (args.episodes > 0) add("episodes", std::to_string(args.episodes));
  add("output.dir", args.out);
  for (const std::string& s : args.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw rhc::ConfigError(fmt::format("--set {}: expected key=value", s));
    add(s.substr(0, eq), s.substr(eq + 1));
  }
  if (!overrides.empty()) text += "# command line\n" + overrides;
  return text;
}

int cmd_run(const CommonArgs& args) {
  const std::string text = config_text(args);
  const rhc::ExperimentConfig config = rhc::parse_config(text);
  const rhc::ExperimentResult result = rhc::run_experiment(config, text);
  fmt::print("metrics: {}\n", (result.experiment_dir / "metrics.csv").string());
  fmt::print("summary: {}\n", (result.experiment_dir / "summary.csv").string());
  for (const rhc::OracleRow& o : result.oracle) {
    fmt::print("oracle {} seed {}: mean_log_lik {}\n", o.env, o.seed, o.mean_log_lik);
  }
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& snapshot_path) {
  const rhc::ExperimentConfig config = rhc::parse_config(config_text(args));
  std::ifstream in(snapshot_path);
  if (!in) throw rhc::Error(fmt::format("cannot read snapshot '{}'", snapshot_path));
  const rhc::DynamicsModel model = rhc::read_snapshot(in);
  for (rhc::EnvId id : config.envs) {
    const rhc::EnvSpec& env = config.env(id);
    const rhc::TransitionSet test = rhc::generate_test_set(
        env, config.eval.test_trajectories, config.eval.test_length, config.eval.test_seed);
    rhc::DownstreamOptions ds;
    ds.restarts = config.eval.downstream_restarts;
    ds.solver = config.explorer.solver;
    const rhc::DownstreamResult cost = rhc::downstream_cost(model, env, ds);
    fmt::print("{}: mean_log_lik {} downstream_cost {}{}\n", rhc::env_name(id),
               rhc::mean_log_likelihood(model, test), cost.cost,
               cost.converged ? "" : " (solver did not converge)");
  }
  return 0;
}

int cmd_oracle(const CommonArgs& args) {
  const rhc::ExperimentConfig config = rhc::parse_config(config_text(args));
  fmt::print("env,seed,oracle_mean_log_lik\n");
  for (rhc::EnvId id : config.envs) {
    const rhc::EnvSpec& env = config.env(id);
    const rhc::TransitionSet test = rhc::generate_test_set(
        env, config.eval.test_trajectories, config.eval.test_length, config.eval.test_seed);
    rhc::OracleOptions oracle;
    oracle.num_samples = config.eval.oracle_samples;
    oracle.sample_seed = config.eval.oracle_seed;
    for (std::uint64_t seed : config.seeds) {
      const rhc::DynamicsModel model =
          rhc::oracle_model(env, config.explorer_for(id, rhc::Method::RhcUs), seed, oracle);
      fmt::print("{},{},{}\n", rhc::env_name(id), seed, rhc::mean_log_likelihood(model, test));
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Receding-horizon curiosity exploration experiments"};
  app.require_subcommand(1);

  CommonArgs run_args;
  CLI::App* run = app.add_subcommand("run", "Run exploration experiments");
  add_common(run, run_args);

  CommonArgs eval_args;
  std::string snapshot;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a model snapshot");
  add_common(eval, eval_args);
  eval->add_option("--snapshot", snapshot, "Model snapshot file")->required();

  std::string metrics;
  std::string plot_out = "plot-data";
  CLI::App* plot = app.add_subcommand("plot-data", "Export median/decile tables from a metrics CSV");
  plot->add_option("--metrics", metrics, "Metrics CSV")->required();
  plot->add_option("--out", plot_out, "Output directory");

  CommonArgs oracle_args;
  CLI::App* oracle = app.add_subcommand("oracle", "Test log-likelihood of the oracle model");
  add_common(oracle, oracle_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_args);
    if (*eval) return cmd_eval(eval_args, snapshot);
    if (*oracle) return cmd_oracle(oracle_args);
    if (*plot) {
      for (const auto& path : rhc::emit_plot_data(metrics, plot_out)) {
        fmt::print("{}\n", path.string());
      }
      return 0;
    }
  } catch (const rhc::ConfigError& e) {
    fmt::print(stderr, "configuration error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
