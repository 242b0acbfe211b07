#pragma once

// Experiment configuration: a flat text file of `key = value` lines with
// dotted keys. `#` starts a comment. Command-line overrides use the same keys.

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rhc/envs.hpp"
#include "rhc/explorer.hpp"

namespace rhc {

enum class Method { RhcUs, RhcEvr, Rand };

std::string_view method_name(Method method);
/// "rhc-us", "rhc-evr" or "rand".
Method parse_method(std::string_view name);

enum class DownstreamSchedule { None, Final, All };

struct EvalConfig {
  int test_trajectories = 100;
  int test_length = 10;
  std::uint64_t test_seed = 1000;
  int oracle_samples = 10000;
  std::uint64_t oracle_seed = 2000;
  DownstreamSchedule downstream = DownstreamSchedule::Final;
  int downstream_restarts = 2;
};

struct ExperimentConfig {
  std::vector<EnvId> envs;
  std::vector<Method> methods{Method::RhcUs};
  int episodes = 20;
  std::vector<std::uint64_t> seeds{0};
  int num_features = 0;  // 0: per-environment default
  std::array<int, 3> default_features{20, 90, 80};
  ExplorerOptions explorer;  // num_features and objective are filled per run
  std::array<EnvSpec, 3> env_specs{make_env(EnvId::MountainCar), make_env(EnvId::Pendulum),
                                   make_env(EnvId::CartPole)};
  EvalConfig eval;
  bool force_evr = false;
  bool record_wall_time = false;
  std::string output_dir;  // empty: RHC_OUTPUT_ROOT or ./runs

  const EnvSpec& env(EnvId id) const { return env_specs[static_cast<std::size_t>(id)]; }
  int features_for(EnvId id) const;
  /// Explorer options for one (environment, method) pair.
  ExplorerOptions explorer_for(EnvId id, Method method) const;
};

/// Applies one `key = value` setting. Throws ConfigError naming the key.
void set_config_value(ExperimentConfig& config, std::string_view key, std::string_view value);

/// Parses configuration text on top of the defaults and validates the result.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);

/// Checks enums, counts and the EVR size gate. Throws ConfigError.
void validate_config(const ExperimentConfig& config);

/// Every key with its resolved value, one `key = value` line each, in a fixed order.
std::string serialize_config(const ExperimentConfig& config);

/// Hash of the settings that determine the results of one run (seed and
/// output location excluded), as 16 hex digits.
std::string run_config_hash(const ExperimentConfig& config, EnvId env, Method method);

}  // namespace rhc
