#include "rhc/model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

namespace rhc {

std::string_view target_mode_name(TargetMode mode) {
  return mode == TargetMode::Delta ? "delta" : "absolute";
}

TargetMode parse_target_mode(std::string_view name) {
  if (name == "delta") return TargetMode::Delta;
  if (name == "absolute") return TargetMode::Absolute;
  throw InvalidInput(fmt::format("unknown target mode '{}'", name));
}

Eigen::MatrixXd TransitionSet::inputs() const {
  Eigen::MatrixXd x(size(), observations.cols() + actions.cols());
  x << observations, actions;
  return x;
}

void TransitionSet::append(const TransitionSet& other) {
  if (other.size() == 0) return;
  if (size() == 0) {
    *this = other;
    return;
  }
  auto stack = [](Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom) {
    Eigen::MatrixXd joined(top.rows() + bottom.rows(), top.cols());
    joined << top, bottom;
    top.swap(joined);
  };
  stack(observations, other.observations);
  stack(actions, other.actions);
  stack(next_observations, other.next_observations);
}

TransitionSet TransitionSet::subset(const std::vector<Eigen::Index>& rows) const {
  TransitionSet out;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.observations.resize(n, observations.cols());
  out.actions.resize(n, actions.cols());
  out.next_observations.resize(n, next_observations.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index r = rows[static_cast<std::size_t>(i)];
    out.observations.row(i) = observations.row(r);
    out.actions.row(i) = actions.row(r);
    out.next_observations.row(i) = next_observations.row(r);
  }
  return out;
}

Eigen::VectorXd DynamicsModel::target_of(const Eigen::VectorXd& obs,
                                         const Eigen::VectorXd& next_obs) const {
  return target == TargetMode::Delta ? Eigen::VectorXd(next_obs - obs) : next_obs;
}

Dataset make_dataset(const FeatureMap& map, const TransitionSet& data, TargetMode target) {
  Dataset out;
  if (data.size() == 0) {
    out.features.resize(0, map.num_features());
    out.targets.resize(0, data.observations.cols());
    return out;
  }
  out.features = feature_matrix(map, data.inputs());
  out.targets = target == TargetMode::Delta
                    ? Eigen::MatrixXd(data.next_observations - data.observations)
                    : data.next_observations;
  return out;
}

DynamicsModel fit_model(const FeatureMap& map, const TransitionSet& data, TargetMode target,
                        double alpha, double beta) {
  DynamicsModel model;
  model.features = map;
  model.target = target;
  const int d = static_cast<int>(data.observations.cols());
  if (map.input_dim() <= d) throw InvalidInput("feature map input is smaller than the observation");
  model.belief = posterior_update(GaussianBelief::prior(map.num_features(), d, alpha, beta),
                                  make_dataset(map, data, target));
  return model;
}

double fit_noise_precision(const FeatureMap& map, const TransitionSet& data, TargetMode target,
                           double alpha, double holdout_fraction, std::uint64_t seed,
                           int block) {
  if (block < 1) throw InvalidInput("holdout block must be positive");
  const Eigen::Index n = data.size();
  const Eigen::Index blocks = (n + block - 1) / block;
  const auto held =
      static_cast<Eigen::Index>(std::floor(holdout_fraction * static_cast<double>(blocks)));
  if (held < 1 || held >= blocks) {
    throw InsufficientData(fmt::format("cannot hold out {} of {} blocks", held, blocks));
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(blocks));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit index draw keeps the split identical across
  // standard library implementations.
  for (Eigen::Index i = blocks - 1; i > 0; --i) {
    const auto j = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  std::vector<Eigen::Index> holdout_rows;
  std::vector<Eigen::Index> train_rows;
  for (Eigen::Index b = 0; b < blocks; ++b) {
    std::vector<Eigen::Index>& rows = b < held ? holdout_rows : train_rows;
    const Eigen::Index first = order[static_cast<std::size_t>(b)] * block;
    for (Eigen::Index r = first; r < std::min(first + block, n); ++r) rows.push_back(r);
  }
  std::sort(holdout_rows.begin(), holdout_rows.end());
  std::sort(train_rows.begin(), train_rows.end());
  return fit_beta(make_dataset(map, data.subset(train_rows), target),
                  make_dataset(map, data.subset(holdout_rows), target), alpha);
}

double fit_noise_precision(const FeatureMap& map, const TransitionSet& train,
                           const TransitionSet& holdout, TargetMode target, double alpha) {
  return fit_beta(make_dataset(map, train, target), make_dataset(map, holdout, target), alpha);
}

Eigen::VectorXd fit_bandwidth_evidence(const FeatureMap& map, const TransitionSet& data,
                                       TargetMode target, double alpha, double beta) {
  Eigen::VectorXd best = map.bandwidth;
  double best_score = log_evidence(make_dataset(map, data, target), alpha, beta);
  for (int j = 0; j < map.input_dim(); ++j) {
    const double center = best[j];
    for (int step = -3; step <= 3; ++step) {
      if (step == 0) continue;
      Eigen::VectorXd trial = best;
      trial[j] = center * std::pow(2.0, step);
      const double score =
          log_evidence(make_dataset(map.with_bandwidth(trial), data, target), alpha, beta);
      if (score > best_score) {
        best_score = score;
        best = trial;
      }
    }
  }
  return best;
}

namespace {

void write_row(std::ostream& out, const Eigen::VectorXd& row) {
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    out << (j ? "," : "") << fmt::format("{}", row[j]);
  }
  out << '\n';
}

std::string next_line(std::istream& in) {
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#') return line;
  }
  throw InvalidInput("truncated snapshot");
}

std::string expect_key(std::istream& in, std::string_view key) {
  const std::string line = next_line(in);
  const auto space = line.find(' ');
  const std::string found = line.substr(0, space);
  if (found != key) throw InvalidInput(fmt::format("snapshot: expected '{}', got '{}'", key, found));
  return space == std::string::npos ? std::string() : line.substr(space + 1);
}

Eigen::VectorXd parse_row(const std::string& line, Eigen::Index expected) {
  Eigen::VectorXd row(expected);
  std::stringstream ss(line);
  std::string cell;
  Eigen::Index j = 0;
  while (std::getline(ss, cell, ',')) {
    if (j >= expected) throw InvalidInput("snapshot row too long");
    row[j++] = std::stod(cell);
  }
  if (j != expected) throw InvalidInput("snapshot row too short");
  return row;
}

}  // namespace

void write_snapshot(std::ostream& out, const DynamicsModel& model) {
  out << "# rhc model snapshot v1\n";
  out << "input_dim " << model.features.input_dim() << '\n';
  out << "features " << model.features.num_features() << '\n';
  out << "outputs " << model.belief.output_dim() << '\n';
  out << "seed " << model.features.seed << '\n';
  out << "target " << target_mode_name(model.target) << '\n';
  out << "beta " << fmt::format("{}", model.belief.beta) << '\n';
  out << "bandwidth ";
  write_row(out, model.features.bandwidth);
  out << "mean\n";
  for (Eigen::Index i = 0; i < model.belief.mean.rows(); ++i) {
    write_row(out, model.belief.mean.row(i).transpose());
  }
  out << "precision\n";
  for (Eigen::Index i = 0; i < model.belief.precision.rows(); ++i) {
    write_row(out, model.belief.precision.row(i).transpose());
  }
}

DynamicsModel read_snapshot(std::istream& in) {
  const int n = std::stoi(expect_key(in, "input_dim"));
  const int m = std::stoi(expect_key(in, "features"));
  const int d = std::stoi(expect_key(in, "outputs"));
  const std::uint64_t seed = std::stoull(expect_key(in, "seed"));
  const TargetMode target = parse_target_mode(expect_key(in, "target"));
  const double beta = std::stod(expect_key(in, "beta"));
  const Eigen::VectorXd bandwidth = parse_row(expect_key(in, "bandwidth"), n);

  DynamicsModel model;
  model.features = sample_feature_map(n, m, bandwidth, seed);
  model.target = target;
  model.belief.beta = beta;
  model.belief.mean.resize(m, d);
  model.belief.precision.resize(m, m);
  expect_key(in, "mean");
  for (int i = 0; i < m; ++i) model.belief.mean.row(i) = parse_row(next_line(in), d).transpose();
  expect_key(in, "precision");
  for (int i = 0; i < m; ++i) {
    model.belief.precision.row(i) = parse_row(next_line(in), m).transpose();
  }
  return model;
}

}  // namespace rhc
