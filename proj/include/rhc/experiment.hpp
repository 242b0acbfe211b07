#pragma once

// Experiment orchestration: one exploration run per (environment, method,
// seed), per-episode artifacts in a content-addressed run directory, and an
// aggregated metrics table.
//
// Layout under the output root:
//   runs/<env>_<method>_<hash>_s<seed>/   config, trajectories, plans,
//                                         model snapshots, metrics, timing
//   experiments/<hash>/                   metrics.csv, summary.csv, oracle.csv

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rhc/config.hpp"
#include "rhc/explorer.hpp"

namespace rhc {

inline constexpr std::string_view kMetricsHeader =
    "env,method,seed,episode,mean_log_lik,downstream_cost,wall_time_s";
inline constexpr std::string_view kMetricsVersion = "# rhc metrics v1";

struct MetricsRow {
  std::string env;
  std::string method;
  std::uint64_t seed = 0;
  int episode = 0;  // 1-based
  double mean_log_lik = 0.0;
  std::optional<double> downstream_cost;
  std::optional<double> wall_time_s;
};

std::string format_metrics_row(const MetricsRow& row);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);
/// Writes the version comment, the header and `rows` in the given order.
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);
/// Orders rows by (env, method, seed, episode).
void sort_metrics(std::vector<MetricsRow>& rows);

struct OracleRow {
  std::string env;
  std::uint64_t seed = 0;
  double mean_log_lik = 0.0;
};

struct ExperimentResult {
  std::filesystem::path experiment_dir;
  std::vector<MetricsRow> rows;  // sorted
  std::vector<OracleRow> oracle;
  std::vector<std::filesystem::path> run_dirs;
};

using LogFn = std::function<void(std::string_view)>;

/// Config value, then RHC_OUTPUT_ROOT, then ./runs.
std::filesystem::path output_root(const ExperimentConfig& config);

std::filesystem::path run_directory(const std::filesystem::path& root,
                                    const ExperimentConfig& config, EnvId env, Method method,
                                    std::uint64_t seed);

/// Runs every (environment, method, seed) combination. Runs resume from the
/// last episode whose artifacts are complete. `config_text` is stored
/// verbatim next to the resolved configuration.
ExperimentResult run_experiment(const ExperimentConfig& config, std::string_view config_text = {},
                                const LogFn& log = {});

/// Rebuilds the exploration state of a run from its artifacts, keeping at
/// most `max_episodes` complete episodes.
std::optional<ExplorationRun> load_run(const std::filesystem::path& run_dir,
                                       const EnvSpec& env, std::uint64_t seed,
                                       int max_episodes);

struct QuantileRow {
  std::string env;
  std::string method;
  std::string metric;
  int episode = 0;
  double median = 0.0;
  double d1 = 0.0;
  double d9 = 0.0;
  int count = 0;
};

/// Median and 1st/9th deciles across seeds per (env, method, metric, episode).
std::vector<QuantileRow> summarize(const std::vector<MetricsRow>& rows);

/// One CSV per (env, metric) with columns method, episode, median, d1, d9.
std::vector<std::filesystem::path> emit_plot_data(const std::filesystem::path& metrics_csv,
                                                  const std::filesystem::path& out_dir);

}  // namespace rhc
