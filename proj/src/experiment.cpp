#include "rhc/experiment.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include <fmt/format.h>

#include "rhc/eval.hpp"

namespace fs = std::filesystem;

namespace rhc {

namespace {

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char ch : text) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ULL;
  }
  return h;
}

void write_file(const fs::path& path, std::string_view content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write '{}'", tmp.string()));
    out << content;
    if (!out) throw Error(fmt::format("write to '{}' failed", tmp.string()));
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot read '{}'", path.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(line);
  while (std::getline(in, item, sep)) out.push_back(item);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_number(const std::string& s, const fs::path& path) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw Error(fmt::format("{}: bad number '{}'", path.string(), s));
  }
  return v;
}

std::string episode_file(std::string_view stem, int episode, std::string_view ext) {
  return fmt::format("{}_{:03}.{}", stem, episode, ext);
}

std::string trajectory_csv(const Trajectory& traj) {
  const Eigen::Index n = traj.observations.cols();
  const Eigen::Index k = traj.actions.cols();
  std::string out = fmt::format("# clip_count={} terminated_early={}\n", traj.clip_count,
                                traj.terminated_early ? 1 : 0);
  out += "t";
  for (Eigen::Index j = 0; j < n; ++j) out += fmt::format(",obs_{}", j);
  for (Eigen::Index j = 0; j < k; ++j) out += fmt::format(",action_{}", j);
  out += ",planned,divergence\n";
  for (Eigen::Index t = 0; t < traj.observations.rows(); ++t) {
    out += fmt::format("{}", t);
    for (Eigen::Index j = 0; j < n; ++j) out += fmt::format(",{}", traj.observations(t, j));
    if (t < traj.steps()) {
      for (Eigen::Index j = 0; j < k; ++j) out += fmt::format(",{}", traj.actions(t, j));
      out += fmt::format(",{},{}\n", traj.planned[static_cast<std::size_t>(t)] ? 1 : 0,
                         traj.divergence[t]);
    } else {
      for (Eigen::Index j = 0; j < k; ++j) out += ",";
      out += ",,\n";
    }
  }
  return out;
}

Trajectory read_trajectory_csv(const fs::path& path, int n, int k) {
  std::istringstream in(read_file(path));
  std::string line;
  Trajectory traj;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      int clips = 0;
      int early = 0;
      if (std::sscanf(line.c_str(), "# clip_count=%d terminated_early=%d", &clips, &early) == 2) {
        traj.clip_count = clips;
        traj.terminated_early = early != 0;
      }
      continue;
    }
    if (line[0] == 't') continue;
    rows.push_back(split(line, ','));
  }
  if (rows.empty()) throw Error(fmt::format("{}: no rows", path.string()));
  const auto steps = static_cast<Eigen::Index>(rows.size()) - 1;
  traj.observations.resize(steps + 1, n);
  traj.actions.resize(steps, k);
  traj.divergence.resize(steps);
  traj.planned.assign(static_cast<std::size_t>(steps), false);
  for (Eigen::Index t = 0; t <= steps; ++t) {
    const auto& r = rows[static_cast<std::size_t>(t)];
    if (static_cast<int>(r.size()) != 1 + n + k + 2) {
      throw Error(fmt::format("{}: row {} has {} fields", path.string(), t, r.size()));
    }
    for (int j = 0; j < n; ++j) traj.observations(t, j) = parse_number(r[1 + j], path);
    if (t == steps) break;
    for (int j = 0; j < k; ++j) traj.actions(t, j) = parse_number(r[1 + n + j], path);
    traj.planned[static_cast<std::size_t>(t)] = r[1 + n + k] == "1";
    traj.divergence[t] = parse_number(r[2 + n + k], path);
  }
  return traj;
}

std::string matrix_csv(const Eigen::MatrixXd& m, std::string_view prefix) {
  std::string out = "t";
  for (Eigen::Index j = 0; j < m.cols(); ++j) out += fmt::format(",{}_{}", prefix, j);
  out += "\n";
  for (Eigen::Index t = 0; t < m.rows(); ++t) {
    out += fmt::format("{}", t);
    for (Eigen::Index j = 0; j < m.cols(); ++j) out += fmt::format(",{}", m(t, j));
    out += "\n";
  }
  return out;
}

Eigen::MatrixXd read_matrix_csv(const fs::path& path, int cols) {
  std::istringstream in(read_file(path));
  std::string line;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == 't' || line[0] == '#') continue;
    rows.push_back(split(line, ','));
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (static_cast<int>(rows[t].size()) != cols + 1) {
      throw Error(fmt::format("{}: row {} has {} fields", path.string(), t, rows[t].size()));
    }
    for (int j = 0; j < cols; ++j) {
      m(static_cast<Eigen::Index>(t), j) = parse_number(rows[t][static_cast<std::size_t>(j) + 1], path);
    }
  }
  return m;
}

std::string optional_number(const std::optional<double>& v) {
  return v ? fmt::format("{}", *v) : std::string();
}

std::string experiment_hash(const ExperimentConfig& config) {
  ExperimentConfig c = config;
  c.output_dir.clear();
  return fmt::format("{:016x}", fnv1a(serialize_config(c)));
}

void default_log(std::string_view message) { fmt::print(stderr, "{}\n", message); }

}  // namespace

std::string format_metrics_row(const MetricsRow& row) {
  return fmt::format("{},{},{},{},{},{},{}", row.env, row.method, row.seed, row.episode,
                     row.mean_log_lik, optional_number(row.downstream_cost),
                     optional_number(row.wall_time_s));
}

std::vector<MetricsRow> read_metrics_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line == kMetricsHeader) continue;
    const std::vector<std::string> f = split(line, ',');
    if (f.size() != 7) throw Error(fmt::format("{}: bad metrics row '{}'", path.string(), line));
    MetricsRow row;
    row.env = f[0];
    row.method = f[1];
    row.seed = std::strtoull(f[2].c_str(), nullptr, 10);
    row.episode = std::atoi(f[3].c_str());
    row.mean_log_lik = parse_number(f[4], path);
    if (!f[5].empty()) row.downstream_cost = parse_number(f[5], path);
    if (!f[6].empty()) row.wall_time_s = parse_number(f[6], path);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_metrics_csv(const fs::path& path, const std::vector<MetricsRow>& rows) {
  std::string out = fmt::format("{}\n{}\n", kMetricsVersion, kMetricsHeader);
  for (const MetricsRow& row : rows) out += format_metrics_row(row) + "\n";
  write_file(path, out);
}

void sort_metrics(std::vector<MetricsRow>& rows) {
  std::sort(rows.begin(), rows.end(), [](const MetricsRow& a, const MetricsRow& b) {
    return std::tie(a.env, a.method, a.seed, a.episode) <
           std::tie(b.env, b.method, b.seed, b.episode);
  });
}

fs::path output_root(const ExperimentConfig& config) {
  if (!config.output_dir.empty()) return config.output_dir;
  if (const char* env = std::getenv("RHC_OUTPUT_ROOT"); env != nullptr && *env != '\0') return env;
  return "runs";
}

fs::path run_directory(const fs::path& root, const ExperimentConfig& config, EnvId env,
                       Method method, std::uint64_t seed) {
  return root / "runs" /
         fmt::format("{}_{}_{}_s{}", env_name(env), method_name(method),
                     run_config_hash(config, env, method), seed);
}

std::optional<ExplorationRun> load_run(const fs::path& run_dir, const EnvSpec& env,
                                       std::uint64_t seed, int max_episodes) {
  const fs::path metrics = run_dir / "metrics.csv";
  if (!fs::exists(metrics)) return std::nullopt;
  const std::vector<MetricsRow> rows = read_metrics_csv(metrics);
  ExplorationRun run;
  run.seed = seed;
  for (int e = 1; e <= max_episodes; ++e) {
    const fs::path traj_path = run_dir / episode_file("episode", e, "csv");
    const fs::path plan_path = run_dir / episode_file("plan", e, "csv");
    const fs::path model_path = run_dir / episode_file("model", e, "txt");
    const bool has_row = std::any_of(rows.begin(), rows.end(),
                                     [e](const MetricsRow& r) { return r.episode == e; });
    if (!has_row || !fs::exists(traj_path) || !fs::exists(plan_path) || !fs::exists(model_path)) {
      break;
    }
    Trajectory traj = read_trajectory_csv(traj_path, env.obs_dim, env.action_dim);
    const TransitionSet fresh = traj.transitions();
    if (run.data.size() == 0) {
      run.data = fresh;
    } else {
      run.data.append(fresh);
    }
    run.episodes.push_back(std::move(traj));
    run.plans.push_back(read_matrix_csv(plan_path, env.action_dim));
    std::istringstream snapshot(read_file(model_path));
    run.models.push_back(read_snapshot(snapshot));
    run.stats.emplace_back();
  }
  if (run.episodes.empty()) return std::nullopt;
  return run;
}

ExperimentResult run_experiment(const ExperimentConfig& config, std::string_view config_text,
                                const LogFn& log_fn) {
  validate_config(config);
  const LogFn log = log_fn ? log_fn : LogFn(default_log);
  const fs::path root = output_root(config);
  ExperimentResult result;
  result.experiment_dir = root / "experiments" / experiment_hash(config);
  fs::create_directories(result.experiment_dir);
  write_file(result.experiment_dir / "config.txt", serialize_config(config));

  std::map<EnvId, TransitionSet> test_sets;
  std::map<std::pair<EnvId, std::uint64_t>, double> oracle_ll;

  for (EnvId env_id : config.envs) {
    const EnvSpec& env = config.env(env_id);
    const TransitionSet& test_set =
        test_sets
            .try_emplace(env_id, generate_test_set(env, config.eval.test_trajectories,
                                                   config.eval.test_length, config.eval.test_seed))
            .first->second;

    for (Method method : config.methods) {
      const ExplorerOptions options = config.explorer_for(env_id, method);
      for (std::uint64_t seed : config.seeds) {
        const fs::path dir = run_directory(root, config, env_id, method, seed);
        fs::create_directories(dir);
        result.run_dirs.push_back(dir);
        if (!config_text.empty()) write_file(dir / "config.txt", config_text);
        write_file(dir / "config.resolved.txt", serialize_config(config));

        if (!oracle_ll.count({env_id, seed})) {
          OracleOptions oracle;
          oracle.num_samples = config.eval.oracle_samples;
          oracle.sample_seed = config.eval.oracle_seed;
          const DynamicsModel model = oracle_model(env, options, seed, oracle);
          oracle_ll[{env_id, seed}] = mean_log_likelihood(model, test_set);
        }

        std::optional<ExplorationRun> resume = load_run(dir, env, seed, config.episodes);
        const int done = resume ? resume->num_episodes() : 0;
        std::vector<MetricsRow> rows;
        if (done > 0) {
          for (MetricsRow& row : read_metrics_csv(dir / "metrics.csv")) {
            if (row.episode <= done) rows.push_back(std::move(row));
          }
          sort_metrics(rows);
          log(fmt::format("{}: resuming after episode {}", dir.filename().string(), done));
        }

        const std::string label =
            fmt::format("{} {} seed {}", env_name(env_id), method_name(method), seed);
        auto on_episode = [&](int e, const ExplorationRun& run) {
          const int episode = e + 1;
          const Trajectory& traj = run.episodes.back();
          const DynamicsModel& model = run.models.back();
          const EpisodeStats& stats = run.stats.back();
          write_file(dir / episode_file("episode", episode, "csv"), trajectory_csv(traj));
          write_file(dir / episode_file("plan", episode, "csv"), matrix_csv(run.plans.back(), "action"));
          std::ostringstream snapshot;
          write_snapshot(snapshot, model);
          write_file(dir / episode_file("model", episode, "txt"), snapshot.str());

          MetricsRow row;
          row.env = std::string(env_name(env_id));
          row.method = std::string(method_name(method));
          row.seed = seed;
          row.episode = episode;
          row.mean_log_lik = mean_log_likelihood(model, test_set);
          const bool want_cost = config.eval.downstream == DownstreamSchedule::All ||
                                 (config.eval.downstream == DownstreamSchedule::Final &&
                                  episode == config.episodes);
          if (want_cost) {
            DownstreamOptions ds;
            ds.restarts = config.eval.downstream_restarts;
            ds.seed = derive_seed(seed, 7, static_cast<std::uint64_t>(episode));
            ds.solver = options.solver;
            row.downstream_cost = downstream_cost(model, env, ds).cost;
          }
          if (config.record_wall_time) row.wall_time_s = stats.wall_time_s;
          rows.push_back(row);
          write_metrics_csv(dir / "metrics.csv", rows);

          std::ofstream timing(dir / "timing.csv", std::ios::app);
          timing << fmt::format("{},{},{},{},{},{}\n", episode, stats.wall_time_s, stats.solves,
                                stats.unconverged_solves, stats.solve.iterations,
                                stats.solve.constraint_violation);
          log(fmt::format("{} episode {}: steps {} mean_log_lik {:.4f}{} ({:.2f} s{})", label,
                          episode, traj.steps(), row.mean_log_lik,
                          row.downstream_cost ? fmt::format(" cost {:.2f}", *row.downstream_cost)
                                              : std::string(),
                          stats.wall_time_s,
                          stats.unconverged_solves > 0 ? ", solver did not converge" : ""));
        };

        if (method == Method::Rand) {
          run_random(env, options, config.episodes, seed, on_episode, std::move(resume));
        } else {
          run_rhc(env, options, config.episodes, seed, on_episode, std::move(resume));
        }
        for (MetricsRow& row : rows) {
          if (row.episode <= config.episodes) result.rows.push_back(std::move(row));
        }
      }
    }
  }

  sort_metrics(result.rows);
  write_metrics_csv(result.experiment_dir / "metrics.csv", result.rows);

  std::string oracle_text = "env,seed,oracle_mean_log_lik\n";
  for (const auto& [key, ll] : oracle_ll) {
    result.oracle.push_back({std::string(env_name(key.first)), key.second, ll});
    oracle_text += fmt::format("{},{},{}\n", env_name(key.first), key.second, ll);
  }
  write_file(result.experiment_dir / "oracle.csv", oracle_text);

  std::string summary = "env,method,metric,episode,median,d1,d9,count\n";
  for (const QuantileRow& q : summarize(result.rows)) {
    summary += fmt::format("{},{},{},{},{},{},{},{}\n", q.env, q.method, q.metric, q.episode,
                           q.median, q.d1, q.d9, q.count);
  }
  write_file(result.experiment_dir / "summary.csv", summary);
  return result;
}

std::vector<QuantileRow> summarize(const std::vector<MetricsRow>& rows) {
  using Key = std::tuple<std::string, std::string, std::string, int>;
  std::map<Key, std::vector<double>> groups;
  for (const MetricsRow& r : rows) {
    groups[{r.env, r.method, "mean_log_lik", r.episode}].push_back(r.mean_log_lik);
    if (r.downstream_cost) {
      groups[{r.env, r.method, "downstream_cost", r.episode}].push_back(*r.downstream_cost);
    }
  }
  std::vector<QuantileRow> out;
  for (const auto& [key, values] : groups) {
    QuantileRow q;
    std::tie(q.env, q.method, q.metric, q.episode) = key;
    q.median = quantile(values, 0.5);
    q.d1 = quantile(values, 0.1);
    q.d9 = quantile(values, 0.9);
    q.count = static_cast<int>(values.size());
    out.push_back(std::move(q));
  }
  return out;
}

std::vector<fs::path> emit_plot_data(const fs::path& metrics_csv, const fs::path& out_dir) {
  const std::vector<QuantileRow> quantiles = summarize(read_metrics_csv(metrics_csv));
  std::map<std::pair<std::string, std::string>, std::string> files;
  for (const QuantileRow& q : quantiles) {
    std::string& body = files[{q.env, q.metric}];
    if (body.empty()) body = "method,episode,median,d1,d9\n";
    body += fmt::format("{},{},{},{},{}\n", q.method, q.episode, q.median, q.d1, q.d9);
  }
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  for (const auto& [key, body] : files) {
    const fs::path path = out_dir / fmt::format("{}_{}.csv", key.first, key.second);
    write_file(path, body);
    written.push_back(path);
  }
  return written;
}

}  // namespace rhc
