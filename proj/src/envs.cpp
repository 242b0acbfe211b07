#include "rhc/envs.hpp"

#include <algorithm>
#include <cctype>
#include <string>

#include <fmt/format.h>

namespace rhc {

std::string_view env_name(EnvId id) {
  switch (id) {
    case EnvId::MountainCar:
      return "mountaincar";
    case EnvId::Pendulum:
      return "pendulum";
    case EnvId::CartPole:
      return "cartpole";
  }
  return "unknown";
}

EnvId parse_env_id(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "mountaincar") return EnvId::MountainCar;
  if (lower == "pendulum") return EnvId::Pendulum;
  if (lower == "cartpole") return EnvId::CartPole;
  throw InvalidInput(fmt::format("unknown environment '{}'", name));
}

EnvSpec make_env(EnvId id) {
  constexpr double pi = std::numbers::pi;
  EnvSpec spec;
  spec.id = id;
  spec.action_dim = 1;
  switch (id) {
    case EnvId::MountainCar:
      spec.state_dim = 2;
      spec.obs_dim = 2;
      spec.action_low = Eigen::VectorXd::Constant(1, -1.0);
      spec.action_high = Eigen::VectorXd::Constant(1, 1.0);
      spec.episode_len = 130;
      spec.dt = 1.0;  // discrete map
      spec.cost.position = 10.0;
      spec.cost.action = 0.001;
      spec.sample_low = Eigen::Vector2d(-1.2, -0.07);
      spec.sample_high = Eigen::Vector2d(0.8, 0.07);
      break;
    case EnvId::Pendulum:
      spec.state_dim = 2;
      spec.obs_dim = 3;
      spec.action_low = Eigen::VectorXd::Constant(1, -2.0);
      spec.action_high = Eigen::VectorXd::Constant(1, 2.0);
      spec.episode_len = 100;
      spec.dt = 0.08;
      spec.cost.upright = 100.0;
      spec.cost.sine = 0.1;
      spec.cost.angular_velocity = 0.1;
      spec.cost.action = 0.001;
      spec.sample_low = Eigen::Vector2d(-pi, -8.0);
      spec.sample_high = Eigen::Vector2d(pi, 8.0);
      break;
    case EnvId::CartPole:
      spec.state_dim = 4;
      spec.obs_dim = 5;
      spec.action_low = Eigen::VectorXd::Constant(1, -10.0);
      spec.action_high = Eigen::VectorXd::Constant(1, 10.0);
      spec.episode_len = 100;
      spec.dt = 0.02;
      spec.cost.position = 100.0;
      spec.cost.upright = 100.0;
      spec.cost.sine = 0.1;
      spec.cost.velocity = 0.1;
      spec.cost.angular_velocity = 0.1;
      spec.cost.action = 0.1;
      spec.sample_low = Eigen::Vector4d(-2.0, -pi, -5.0, -8.0);
      spec.sample_high = Eigen::Vector4d(2.0, pi, 5.0, 8.0);
      break;
  }
  return spec;
}

void validate(const EnvSpec& spec) {
  if (spec.action_low.size() != spec.action_dim || spec.action_high.size() != spec.action_dim) {
    throw InvalidInput("action bounds do not match action_dim");
  }
  if (!(spec.action_low.array() < spec.action_high.array()).all()) {
    throw InvalidInput("action_low must be strictly below action_high");
  }
  if (spec.episode_len <= 0) throw InvalidInput("episode_len must be positive");
  if (!(spec.dt > 0.0)) throw InvalidInput("dt must be positive");
  if (spec.sample_low.size() != spec.state_dim || spec.sample_high.size() != spec.state_dim ||
      !(spec.sample_low.array() <= spec.sample_high.array()).all()) {
    throw InvalidInput("state sampling box is inconsistent");
  }
}

EnvState reset(const EnvSpec& spec) {
  constexpr double pi = std::numbers::pi;
  EnvState state;
  switch (spec.id) {
    case EnvId::MountainCar:
      state.internal = Eigen::Vector2d(spec.params.start_x, 0.0);
      break;
    case EnvId::Pendulum:
      state.internal = Eigen::Vector2d(pi, 0.0);
      break;
    case EnvId::CartPole:
      state.internal = Eigen::Vector4d(0.0, pi, 0.0, 0.0);
      break;
  }
  return state;
}

Eigen::VectorXd observation_scale(const EnvSpec& spec) {
  const Eigen::VectorXd half = 0.5 * (spec.sample_high - spec.sample_low);
  Eigen::VectorXd scale(spec.obs_dim);
  switch (spec.id) {
    case EnvId::MountainCar:
      scale = half;
      break;
    case EnvId::Pendulum:
      scale << 1.0, 1.0, half[1];
      break;
    case EnvId::CartPole:
      scale << half[0], 1.0, 1.0, half[2], half[3];
      break;
  }
  return scale.cwiseMax(1e-6);
}

Eigen::VectorXd input_scale(const EnvSpec& spec) {
  Eigen::VectorXd scale(spec.obs_dim + spec.action_dim);
  scale << observation_scale(spec), 0.5 * (spec.action_high - spec.action_low);
  return scale;
}

bool out_of_bounds(const EnvSpec& spec, const Eigen::VectorXd& x) {
  switch (spec.id) {
    case EnvId::MountainCar:
      return x[0] < spec.params.x_min || x[0] > spec.params.x_max;
    case EnvId::CartPole:
      return std::abs(x[0]) > spec.params.cart_limit;
    case EnvId::Pendulum:
      return false;
  }
  return false;
}

StepResult step(const EnvSpec& spec, const EnvState& state, const Eigen::VectorXd& action) {
  if (action.size() != spec.action_dim) {
    throw InvalidInput(fmt::format("action has length {}, expected {}", action.size(),
                                   spec.action_dim));
  }
  if (!action.allFinite()) throw InvalidInput("non-finite action");

  StepResult result;
  result.state.clip_count = state.clip_count;
  const Eigen::VectorXd clipped = action.cwiseMax(spec.action_low).cwiseMin(spec.action_high);
  if (clipped != action) ++result.state.clip_count;

  result.state.internal = physics_step<double>(spec, state.internal, clipped);
  result.state.step_count = state.step_count + 1;
  result.terminated =
      result.state.step_count >= spec.episode_len || out_of_bounds(spec, result.state.internal);
  return result;
}

Eigen::VectorXd observe(const EnvSpec& spec, const EnvState& state) {
  return observation<double>(spec, state.internal);
}

double evaluate_stage_cost(const EnvSpec& spec, const Eigen::VectorXd& obs,
                           const Eigen::VectorXd& action) {
  if (obs.size() != spec.obs_dim) {
    throw InvalidInput(fmt::format("observation has length {}, expected {}", obs.size(),
                                   spec.obs_dim));
  }
  return stage_cost<double>(spec, obs, action);
}

}  // namespace rhc
