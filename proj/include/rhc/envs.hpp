#pragma once

// Deterministic simulators for MountainCar, Pendulum and CartPole.
//
// Angles are measured from the upright position (theta = 0 is up). The two
// continuous systems are integrated with semi-implicit Euler: velocities are
// updated first and the new velocity is used for the position update.

#include <cmath>
#include <numbers>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "rhc/error.hpp"
#include "rhc/types.hpp"

namespace rhc {

enum class EnvId { MountainCar, Pendulum, CartPole };

std::string_view env_name(EnvId id);
/// Accepts "mountaincar", "pendulum", "cartpole" (case-insensitive).
EnvId parse_env_id(std::string_view name);

/// Physical constants. Only the group matching the environment id is used.
struct EnvParams {
  // MountainCar
  double power = 1e-3;
  double hill_gravity = 0.0025;
  double x_min = -1.2;
  double x_max = 0.8;
  double x_goal = 0.6;
  double start_x = -std::numbers::pi / 6.0;  // bottom of the valley

  // Pendulum
  double pendulum_mass = 1.0;
  double pendulum_length = 1.0;

  // CartPole
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double pole_half_length = 0.5;
  double cart_limit = 2.0;

  double gravity = 9.81;
};

/// Coefficients of the quadratic stage costs.
struct CostWeights {
  double position = 0.0;          // (x - x_goal)^2 for MountainCar, x^2 for CartPole
  double upright = 0.0;           // (1 - cos theta)^2
  double sine = 0.0;              // sin^2 theta
  double velocity = 0.0;          // xdot^2
  double angular_velocity = 0.0;  // thetadot^2
  double action = 0.0;            // a^2
};

struct EnvSpec {
  EnvId id = EnvId::Pendulum;
  int state_dim = 0;  // internal physical coordinates
  int obs_dim = 0;
  int action_dim = 1;
  Eigen::VectorXd action_low;
  Eigen::VectorXd action_high;
  int episode_len = 0;
  double dt = 0.0;
  EnvParams params;
  CostWeights cost;
  // Box for uniform sampling of internal states (test sets, oracle data).
  Eigen::VectorXd sample_low;
  Eigen::VectorXd sample_high;
};

/// Default settings for an environment.
EnvSpec make_env(EnvId id);
/// Throws InvalidInput when bounds, lengths or step sizes are inconsistent.
void validate(const EnvSpec& spec);

struct EnvState {
  Eigen::VectorXd internal;
  int step_count = 0;
  int clip_count = 0;
};

struct StepResult {
  EnvState state;
  bool terminated = false;
};

EnvState reset(const EnvSpec& spec);
StepResult step(const EnvSpec& spec, const EnvState& state, const Eigen::VectorXd& action);
Eigen::VectorXd observe(const EnvSpec& spec, const EnvState& state);

/// Typical magnitude of each observation coordinate, taken from the
/// half-width of the state sampling box.
Eigen::VectorXd observation_scale(const EnvSpec& spec);

/// Observation scale followed by the action half range: the natural unit
/// of each model input.
Eigen::VectorXd input_scale(const EnvSpec& spec);

/// True when the internal state violates the environment's position limits.
bool out_of_bounds(const EnvSpec& spec, const Eigen::VectorXd& internal);

/// One simulator step on internal coordinates, without clipping or bounds.
template <class S>
Vec<S> physics_step(const EnvSpec& spec, const Vec<S>& x, const Vec<S>& a) {
  using std::cos;
  using std::sin;
  const EnvParams& p = spec.params;
  Vec<S> next(x.size());
  switch (spec.id) {
    case EnvId::MountainCar: {
      const S v = x[1] + p.power * a[0] - p.hill_gravity * cos(3.0 * x[0]);
      next[0] = x[0] + v;
      next[1] = v;
      break;
    }
    case EnvId::Pendulum: {
      const double ml2 = p.pendulum_mass * p.pendulum_length * p.pendulum_length;
      const S acc = (p.gravity / p.pendulum_length) * sin(x[0]) + a[0] / ml2;
      const S omega = x[1] + spec.dt * acc;
      next[0] = x[0] + spec.dt * omega;
      next[1] = omega;
      break;
    }
    case EnvId::CartPole: {
      // x = [cart position, pole angle, cart velocity, pole angular velocity]
      const double total = p.cart_mass + p.pole_mass;
      const double pml = p.pole_mass * p.pole_half_length;
      const S s = sin(x[1]);
      const S c = cos(x[1]);
      const S temp = (a[0] + pml * x[3] * x[3] * s) / total;
      const S theta_acc = (p.gravity * s - c * temp) /
                          (p.pole_half_length * (4.0 / 3.0 - p.pole_mass * c * c / total));
      const S x_acc = temp - pml * theta_acc * c / total;
      const S xdot = x[2] + spec.dt * x_acc;
      const S thetadot = x[3] + spec.dt * theta_acc;
      next[0] = x[0] + spec.dt * xdot;
      next[1] = x[1] + spec.dt * thetadot;
      next[2] = xdot;
      next[3] = thetadot;
      break;
    }
  }
  return next;
}

/// Observation encoding of internal coordinates.
template <class S>
Vec<S> observation(const EnvSpec& spec, const Vec<S>& x) {
  using std::cos;
  using std::sin;
  Vec<S> obs(spec.obs_dim);
  switch (spec.id) {
    case EnvId::MountainCar:
      obs << x[0], x[1];
      break;
    case EnvId::Pendulum:
      obs << cos(x[0]), sin(x[0]), x[1];
      break;
    case EnvId::CartPole:
      obs << x[0], cos(x[1]), sin(x[1]), x[2], x[3];
      break;
  }
  return obs;
}

template <class S>
S stage_cost(const EnvSpec& spec, const Vec<S>& obs, const Vec<S>& action) {
  const CostWeights& w = spec.cost;
  const S a2 = action.squaredNorm();
  switch (spec.id) {
    case EnvId::MountainCar: {
      const S dx = obs[0] - spec.params.x_goal;
      return w.position * dx * dx + w.action * a2;
    }
    case EnvId::Pendulum: {
      const S u = 1.0 - obs[0];
      return w.upright * u * u + w.sine * obs[1] * obs[1] +
             w.angular_velocity * obs[2] * obs[2] + w.action * a2;
    }
    case EnvId::CartPole: {
      const S u = 1.0 - obs[1];
      return w.position * obs[0] * obs[0] + w.upright * u * u + w.sine * obs[2] * obs[2] +
             w.velocity * obs[3] * obs[3] + w.angular_velocity * obs[4] * obs[4] + w.action * a2;
    }
  }
  return S(0.0);
}

/// Checked double-precision stage cost.
double evaluate_stage_cost(const EnvSpec& spec, const Eigen::VectorXd& obs,
                           const Eigen::VectorXd& action);

}  // namespace rhc
