#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "rhc/eval.hpp"
#include "rhc/experiment.hpp"

namespace fs = std::filesystem;

namespace rhc {
namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::path(::testing::TempDir()) / ("rhc_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Short episodes keep the runs cheap while exercising the full pipeline.
std::string small_config(const fs::path& out, int episodes) {
  return "env = mountaincar, pendulum\n"
         "method = rand\n"
         "seeds = 0-2\n"
         "episodes = " + std::to_string(episodes) + "\n"
         "env.mountaincar.episode_len = 10\n"
         "env.pendulum.episode_len = 10\n"
         "rff.features = 10\n"
         "rff.bandwidth_mode = heuristic\n"
         "eval.test_trajectories = 10\n"
         "eval.oracle_samples = 300\n"
         "eval.downstream = none\n"
         "output.dir = " + out.string() + "\n";
}

TEST(Config, MinimalPendulum) {
  const ExperimentConfig c = parse_config("env = pendulum\n");
  EXPECT_EQ(c.episodes, 20);
  EXPECT_EQ(c.features_for(EnvId::Pendulum), 90);
  EXPECT_EQ(c.seeds, std::vector<std::uint64_t>{0});
  ASSERT_EQ(c.methods.size(), 1u);
  EXPECT_EQ(c.methods[0], Method::RhcUs);
  EXPECT_EQ(c.explorer_for(EnvId::Pendulum, Method::RhcUs).num_features, 90);
}

TEST(Config, DefaultFeatureCounts) {
  const ExperimentConfig c = parse_config("env = mountaincar\n");
  EXPECT_EQ(c.features_for(EnvId::MountainCar), 20);
  EXPECT_EQ(c.features_for(EnvId::CartPole), 80);
}

TEST(Config, EvrGateOnPendulum) {
  EXPECT_THROW(parse_config("env = pendulum\nmethod = rhc-evr\n"), ConfigError);
  EXPECT_NO_THROW(parse_config("env = mountaincar\nmethod = rhc-evr\n"));
  EXPECT_NO_THROW(parse_config("env = pendulum\nmethod = rhc-evr\nevr.force = true\n"));
}

TEST(Config, RoundTrip) {
  const ExperimentConfig c = parse_config(
      "env = cartpole, pendulum\nmethod = rand, rhc-us\nseeds = 3,5-7\nblr.beta = 250\n"
      "explorer.horizon = 30\nsolver.max_inner = 77\n");
  const std::string text = serialize_config(c);
  EXPECT_EQ(serialize_config(parse_config(text)), text);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{3, 5, 6, 7}));
}

TEST(Config, ErrorsNameTheKey) {
  try {
    parse_config("env = pendulum\nepisodes = many\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("episodes"), std::string::npos);
  }
  EXPECT_THROW(parse_config("env = pendulum\nno.such.key = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("env = pendulum\nmethod = greedy\n"), ConfigError);
  EXPECT_THROW(parse_config("env = pendulum\nseeds = 4-2\n"), ConfigError);
}

TEST(Config, CommentsAndWhitespace) {
  const ExperimentConfig c = parse_config("# header\n  env =  pendulum   # trailing\n\nepisodes=3\n");
  EXPECT_EQ(c.episodes, 3);
  ASSERT_EQ(c.envs.size(), 1u);
}

TEST(Config, RunHashIgnoresSeedsAndEpisodes) {
  const ExperimentConfig a = parse_config("env = pendulum\nseeds = 0\nepisodes = 5\n");
  const ExperimentConfig b = parse_config("env = pendulum\nseeds = 0-9\nepisodes = 20\n");
  const ExperimentConfig c = parse_config("env = pendulum\nblr.alpha = 2\n");
  EXPECT_EQ(run_config_hash(a, EnvId::Pendulum, Method::RhcUs),
            run_config_hash(b, EnvId::Pendulum, Method::RhcUs));
  EXPECT_NE(run_config_hash(a, EnvId::Pendulum, Method::RhcUs),
            run_config_hash(c, EnvId::Pendulum, Method::RhcUs));
  EXPECT_NE(run_config_hash(a, EnvId::Pendulum, Method::RhcUs),
            run_config_hash(a, EnvId::Pendulum, Method::Rand));
}

TEST(Metrics, RowFormatting) {
  MetricsRow row{"pendulum", "rand", 2, 7, -1.5, std::nullopt, std::nullopt};
  EXPECT_EQ(format_metrics_row(row), "pendulum,rand,2,7,-1.5,,");
  const fs::path dir = fresh_dir("rows");
  write_metrics_csv(dir / "m.csv", {row});
  const std::vector<MetricsRow> back = read_metrics_csv(dir / "m.csv");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(format_metrics_row(back[0]), format_metrics_row(row));
}

class ExperimentTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    first_ = fresh_dir("exp_a");
    second_ = fresh_dir("exp_b");
    const std::string text = small_config(first_, 20);
    result_a_ = new ExperimentResult(run_experiment(parse_config(text), text));
    const std::string text_b = small_config(second_, 20);
    result_b_ = new ExperimentResult(run_experiment(parse_config(text_b), text_b));
  }
  static void TearDownTestSuite() {
    delete result_a_;
    delete result_b_;
  }
  static inline fs::path first_;
  static inline fs::path second_;
  static inline ExperimentResult* result_a_ = nullptr;
  static inline ExperimentResult* result_b_ = nullptr;
};

TEST_F(ExperimentTest, RowCount) {
  EXPECT_EQ(result_a_->rows.size(), 120u);
  EXPECT_EQ(result_a_->run_dirs.size(), 6u);
  EXPECT_EQ(result_a_->oracle.size(), 6u);
  const std::vector<MetricsRow> on_disk = read_metrics_csv(result_a_->experiment_dir / "metrics.csv");
  EXPECT_EQ(on_disk.size(), 120u);
}

TEST_F(ExperimentTest, RerunIsByteIdentical) {
  EXPECT_EQ(slurp(result_a_->experiment_dir / "metrics.csv"),
            slurp(result_b_->experiment_dir / "metrics.csv"));
  EXPECT_EQ(slurp(result_a_->experiment_dir / "oracle.csv"),
            slurp(result_b_->experiment_dir / "oracle.csv"));
}

TEST_F(ExperimentTest, ResumeMatchesFreshRun) {
  const fs::path dir = fresh_dir("exp_resume");
  const std::string partial = small_config(dir, 8);
  run_experiment(parse_config(partial), partial);
  const std::string full = small_config(dir, 20);
  const ExperimentResult resumed = run_experiment(parse_config(full), full);
  ASSERT_EQ(resumed.rows.size(), result_a_->rows.size());
  for (std::size_t i = 0; i < resumed.rows.size(); ++i) {
    EXPECT_EQ(format_metrics_row(resumed.rows[i]), format_metrics_row(result_a_->rows[i]));
  }
}

TEST_F(ExperimentTest, LoadRunRestoresEpisodes) {
  const ExperimentConfig config = parse_config(small_config(first_, 20));
  const fs::path run_dir = run_directory(fs::path(first_), config, EnvId::Pendulum, Method::Rand, 1);
  const std::optional<ExplorationRun> run = load_run(run_dir, config.env(EnvId::Pendulum), 1, 5);
  ASSERT_TRUE(run.has_value());
  EXPECT_EQ(run->num_episodes(), 5);
  EXPECT_EQ(run->data.size(), 50);
}

TEST_F(ExperimentTest, PlotData) {
  const fs::path out = fresh_dir("plot");
  const std::vector<fs::path> files = emit_plot_data(result_a_->experiment_dir / "metrics.csv", out);
  ASSERT_FALSE(files.empty());
  std::ifstream in(out / "pendulum_mean_log_lik.csv");
  ASSERT_TRUE(in.good());
  std::string line;
  int data_rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#' && line.rfind("method", 0) != 0) ++data_rows;
  }
  EXPECT_EQ(data_rows, 20);
}

TEST(Summary, SingleSeedHasDegenerateDeciles) {
  std::vector<MetricsRow> rows;
  for (int e = 1; e <= 3; ++e) rows.push_back({"pendulum", "rand", 0, e, -1.0 * e, std::nullopt, std::nullopt});
  for (const QuantileRow& q : summarize(rows)) {
    if (q.metric != "mean_log_lik") continue;
    EXPECT_EQ(q.median, q.d1);
    EXPECT_EQ(q.median, q.d9);
    EXPECT_EQ(q.count, 1);
  }
}

TEST(Summary, MatchesBruteForceQuantiles) {
  std::vector<MetricsRow> rows;
  std::vector<double> values;
  for (std::uint64_t s = 0; s < 7; ++s) {
    const double v = std::sin(static_cast<double>(s) * 1.7) * 10.0;
    values.push_back(v);
    rows.push_back({"mountaincar", "rhc-us", s, 1, v, std::nullopt, std::nullopt});
  }
  std::sort(values.begin(), values.end());
  auto brute = [&](double q) {
    const double h = (values.size() - 1) * q;
    const auto lo = static_cast<std::size_t>(h);
    const double frac = h - static_cast<double>(lo);
    return lo + 1 < values.size() ? values[lo] + frac * (values[lo + 1] - values[lo]) : values[lo];
  };
  bool seen = false;
  for (const QuantileRow& q : summarize(rows)) {
    if (q.metric != "mean_log_lik") continue;
    seen = true;
    EXPECT_NEAR(q.median, brute(0.5), 1e-12);
    EXPECT_NEAR(q.d1, brute(0.1), 1e-12);
    EXPECT_NEAR(q.d9, brute(0.9), 1e-12);
    EXPECT_EQ(q.count, 7);
  }
  EXPECT_TRUE(seen);
}

}  // namespace
}  // namespace rhc
