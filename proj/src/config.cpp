#include "rhc/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace rhc {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(std::string_view value) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    const auto comma = value.find(',', start);
    const auto end = comma == std::string_view::npos ? value.size() : comma;
    std::string item = trim(value.substr(start, end - start));
    if (!item.empty()) out.push_back(std::move(item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view what) {
  throw ConfigError(fmt::format("{}: invalid value '{}' ({})", key, value, what));
}

double to_double(std::string_view key, std::string_view value) {
  const std::string v = trim(value);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    bad_value(key, value, "expected a finite number");
  }
  return out;
}

template <class Int>
Int to_int(std::string_view key, std::string_view value) {
  const std::string v = trim(value);
  Int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, value, "expected an integer");
  return out;
}

bool to_bool(std::string_view key, std::string_view value) {
  const std::string v = trim(value);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, value, "expected true or false");
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }
std::string fmt_double(double x) { return fmt::format("{}", x); }

std::vector<std::uint64_t> to_seeds(std::string_view key, std::string_view value) {
  std::vector<std::uint64_t> seeds;
  for (const std::string& item : split_list(value)) {
    const auto dash = item.find('-');
    if (dash != std::string::npos && dash > 0) {
      const auto lo = to_int<std::uint64_t>(key, item.substr(0, dash));
      const auto hi = to_int<std::uint64_t>(key, item.substr(dash + 1));
      if (hi < lo || hi - lo > 100000) bad_value(key, value, "bad seed range");
      for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    } else {
      seeds.push_back(to_int<std::uint64_t>(key, item));
    }
  }
  if (seeds.empty()) bad_value(key, value, "seed list is empty");
  return seeds;
}

struct Field {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view key, std::string_view value)> set;
};

template <class T>
Field double_field(std::string key, T getter) {
  return {std::move(key),
          [getter](const ExperimentConfig& c) {
            return fmt_double(getter(const_cast<ExperimentConfig&>(c)));
          },
          [getter](ExperimentConfig& c, std::string_view k, std::string_view v) {
            getter(c) = to_double(k, v);
          }};
}

template <class T>
Field int_field(std::string key, T getter) {
  return {std::move(key),
          [getter](const ExperimentConfig& c) {
            return fmt::format("{}", getter(const_cast<ExperimentConfig&>(c)));
          },
          [getter](ExperimentConfig& c, std::string_view k, std::string_view v) {
            auto& ref = getter(c);
            ref = to_int<std::remove_reference_t<decltype(ref)>>(k, v);
          }};
}

template <class T>
Field bool_field(std::string key, T getter) {
  return {std::move(key),
          [getter](const ExperimentConfig& c) {
            return fmt_bool(getter(const_cast<ExperimentConfig&>(c)));
          },
          [getter](ExperimentConfig& c, std::string_view k, std::string_view v) {
            getter(c) = to_bool(k, v);
          }};
}

void add_env_fields(std::vector<Field>& fields, EnvId id) {
  const auto i = static_cast<std::size_t>(id);
  const std::string p = fmt::format("env.{}.", env_name(id));
  auto spec = [i](ExperimentConfig& c) -> EnvSpec& { return c.env_specs[i]; };

  fields.push_back(int_field(p + "episode_len", [spec](ExperimentConfig& c) -> int& {
    return spec(c).episode_len;
  }));
  fields.push_back(double_field(p + "dt", [spec](ExperimentConfig& c) -> double& {
    return spec(c).dt;
  }));
  fields.push_back({p + "action_bound",
                    [spec](const ExperimentConfig& c) {
                      return fmt_double(spec(const_cast<ExperimentConfig&>(c)).action_high[0]);
                    },
                    [spec](ExperimentConfig& c, std::string_view k, std::string_view v) {
                      const double b = to_double(k, v);
                      if (!(b > 0.0)) bad_value(k, v, "must be positive");
                      spec(c).action_low.setConstant(-b);
                      spec(c).action_high.setConstant(b);
                    }});
  fields.push_back(double_field(p + "gravity", [spec](ExperimentConfig& c) -> double& {
    return spec(c).params.gravity;
  }));
  switch (id) {
    case EnvId::MountainCar:
      fields.push_back(double_field(p + "power", [spec](ExperimentConfig& c) -> double& {
        return spec(c).params.power;
      }));
      fields.push_back(double_field(p + "hill_gravity", [spec](ExperimentConfig& c) -> double& {
        return spec(c).params.hill_gravity;
      }));
      fields.push_back(double_field(p + "start_x", [spec](ExperimentConfig& c) -> double& {
        return spec(c).params.start_x;
      }));
      fields.push_back(double_field(p + "x_goal", [spec](ExperimentConfig& c) -> double& {
        return spec(c).params.x_goal;
      }));
      break;
    case EnvId::Pendulum:
      fields.push_back(double_field(p + "mass", [spec](ExperimentConfig& c) -> double& {
        return spec(c).params.pendulum_mass;
      }));
      fields.push_back(double_field(p + "length", [spec](ExperimentConfig& c) -> double& {
        return spec(c).params.pendulum_length;
      }));
      break;
    case EnvId::CartPole:
      fields.push_back(double_field(p + "cart_mass", [spec](ExperimentConfig& c) -> double& {
        return spec(c).params.cart_mass;
      }));
      fields.push_back(double_field(p + "pole_mass", [spec](ExperimentConfig& c) -> double& {
        return spec(c).params.pole_mass;
      }));
      fields.push_back(double_field(p + "pole_half_length",
                                    [spec](ExperimentConfig& c) -> double& {
                                      return spec(c).params.pole_half_length;
                                    }));
      fields.push_back(double_field(p + "cart_limit", [spec](ExperimentConfig& c) -> double& {
        return spec(c).params.cart_limit;
      }));
      break;
  }
  fields.push_back(int_field(fmt::format("rff.features.{}", env_name(id)),
                             [i](ExperimentConfig& c) -> int& { return c.default_features[i]; }));
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"env",
                 [](const ExperimentConfig& c) {
                   std::vector<std::string> names;
                   for (EnvId id : c.envs) names.emplace_back(env_name(id));
                   return fmt::format("{}", fmt::join(names, ","));
                 },
                 [](ExperimentConfig& c, std::string_view k, std::string_view v) {
                   c.envs.clear();
                   for (const std::string& item : split_list(v)) {
                     try {
                       c.envs.push_back(parse_env_id(item));
                     } catch (const InvalidInput& e) {
                       bad_value(k, v, e.what());
                     }
                   }
                 }});
    f.push_back({"method",
                 [](const ExperimentConfig& c) {
                   std::vector<std::string> names;
                   for (Method m : c.methods) names.emplace_back(method_name(m));
                   return fmt::format("{}", fmt::join(names, ","));
                 },
                 [](ExperimentConfig& c, std::string_view k, std::string_view v) {
                   c.methods.clear();
                   for (const std::string& item : split_list(v)) {
                     try {
                       c.methods.push_back(parse_method(item));
                     } catch (const InvalidInput& e) {
                       bad_value(k, v, e.what());
                     }
                   }
                 }});
    f.push_back(int_field("episodes", [](ExperimentConfig& c) -> int& { return c.episodes; }));
    f.push_back({"seeds",
                 [](const ExperimentConfig& c) { return fmt::format("{}", fmt::join(c.seeds, ",")); },
                 [](ExperimentConfig& c, std::string_view k, std::string_view v) {
                   c.seeds = to_seeds(k, v);
                 }});
    f.push_back(int_field("rff.features", [](ExperimentConfig& c) -> int& { return c.num_features; }));
    f.push_back({"rff.bandwidth_mode",
                 [](const ExperimentConfig& c) {
                   return std::string(c.explorer.bandwidth_mode == BandwidthMode::Evidence
                                          ? "evidence"
                                          : "heuristic");
                 },
                 [](ExperimentConfig& c, std::string_view k, std::string_view v) {
                   const std::string s = trim(v);
                   if (s == "heuristic") {
                     c.explorer.bandwidth_mode = BandwidthMode::Heuristic;
                   } else if (s == "evidence") {
                     c.explorer.bandwidth_mode = BandwidthMode::Evidence;
                   } else {
                     bad_value(k, v, "expected heuristic or evidence");
                   }
                 }});
    f.push_back(bool_field("rff.refit_bandwidth",
                           [](ExperimentConfig& c) -> bool& { return c.explorer.refit_bandwidth; }));
    f.push_back(double_field("rff.initial_bandwidth", [](ExperimentConfig& c) -> double& {
      return c.explorer.initial_bandwidth;
    }));
    f.push_back(double_field("rff.bandwidth_floor", [](ExperimentConfig& c) -> double& {
      return c.explorer.bandwidth_floor;
    }));
    f.push_back(double_field("rff.bandwidth_scale_floor", [](ExperimentConfig& c) -> double& {
      return c.explorer.bandwidth_scale_floor;
    }));
    f.push_back(double_field("blr.alpha", [](ExperimentConfig& c) -> double& {
      return c.explorer.alpha;
    }));
    f.push_back({"blr.beta",
                 [](const ExperimentConfig& c) {
                   return c.explorer.fixed_beta ? fmt_double(*c.explorer.fixed_beta)
                                                : std::string("fit");
                 },
                 [](ExperimentConfig& c, std::string_view k, std::string_view v) {
                   if (trim(v) == "fit") {
                     c.explorer.fixed_beta.reset();
                   } else {
                     c.explorer.fixed_beta = to_double(k, v);
                   }
                 }});
    f.push_back(double_field("blr.initial_beta", [](ExperimentConfig& c) -> double& {
      return c.explorer.initial_beta;
    }));
    f.push_back(bool_field("blr.refit_beta",
                           [](ExperimentConfig& c) -> bool& { return c.explorer.refit_beta; }));
    f.push_back(double_field("blr.holdout_fraction", [](ExperimentConfig& c) -> double& {
      return c.explorer.holdout_fraction;
    }));
    f.push_back(int_field("blr.holdout_block",
                          [](ExperimentConfig& c) -> int& { return c.explorer.holdout_block; }));
    f.push_back(bool_field("blr.holdout_latest_episode", [](ExperimentConfig& c) -> bool& {
      return c.explorer.holdout_latest_episode;
    }));
    f.push_back({"blr.target",
                 [](const ExperimentConfig& c) {
                   return std::string(target_mode_name(c.explorer.target));
                 },
                 [](ExperimentConfig& c, std::string_view k, std::string_view v) {
                   try {
                     c.explorer.target = parse_target_mode(trim(v));
                   } catch (const InvalidInput& e) {
                     bad_value(k, v, e.what());
                   }
                 }});
    f.push_back(int_field("explorer.horizon",
                          [](ExperimentConfig& c) -> int& { return c.explorer.horizon; }));
    f.push_back(int_field("explorer.replan_interval",
                          [](ExperimentConfig& c) -> int& { return c.explorer.replan_interval; }));
    f.push_back(bool_field("explorer.warm_start",
                           [](ExperimentConfig& c) -> bool& { return c.explorer.warm_start; }));
    f.push_back(int_field("explorer.init_candidates",
                          [](ExperimentConfig& c) -> int& { return c.explorer.init_candidates; }));
    f.push_back({"explorer.weighting",
                 [](const ExperimentConfig& c) {
                   return std::string(c.explorer.weighting == StepWeighting::LastStep ? "last"
                                                                                      : "uniform");
                 },
                 [](ExperimentConfig& c, std::string_view k, std::string_view v) {
                   const std::string s = trim(v);
                   if (s == "uniform") {
                     c.explorer.weighting = StepWeighting::Uniform;
                   } else if (s == "last") {
                     c.explorer.weighting = StepWeighting::LastStep;
                   } else {
                     bad_value(k, v, "expected uniform or last");
                   }
                 }});
    f.push_back(bool_field("evr.force", [](ExperimentConfig& c) -> bool& { return c.force_evr; }));
    f.push_back(double_field("solver.penalty_init", [](ExperimentConfig& c) -> double& {
      return c.explorer.solver.penalty_init;
    }));
    f.push_back(double_field("solver.penalty_growth", [](ExperimentConfig& c) -> double& {
      return c.explorer.solver.penalty_growth;
    }));
    f.push_back(double_field("solver.penalty_max", [](ExperimentConfig& c) -> double& {
      return c.explorer.solver.penalty_max;
    }));
    f.push_back(int_field("solver.max_outer",
                          [](ExperimentConfig& c) -> int& { return c.explorer.solver.max_outer; }));
    f.push_back(int_field("solver.max_inner",
                          [](ExperimentConfig& c) -> int& { return c.explorer.solver.max_inner; }));
    f.push_back(double_field("solver.feasibility_tol", [](ExperimentConfig& c) -> double& {
      return c.explorer.solver.feasibility_tol;
    }));
    f.push_back(double_field("solver.gradient_tol", [](ExperimentConfig& c) -> double& {
      return c.explorer.solver.gradient_tol;
    }));
    f.push_back(int_field("solver.memory",
                          [](ExperimentConfig& c) -> int& { return c.explorer.solver.memory; }));
    f.push_back(int_field("eval.test_trajectories",
                          [](ExperimentConfig& c) -> int& { return c.eval.test_trajectories; }));
    f.push_back(int_field("eval.test_length",
                          [](ExperimentConfig& c) -> int& { return c.eval.test_length; }));
    f.push_back(int_field("eval.test_seed", [](ExperimentConfig& c) -> std::uint64_t& {
      return c.eval.test_seed;
    }));
    f.push_back(int_field("eval.oracle_samples",
                          [](ExperimentConfig& c) -> int& { return c.eval.oracle_samples; }));
    f.push_back(int_field("eval.oracle_seed", [](ExperimentConfig& c) -> std::uint64_t& {
      return c.eval.oracle_seed;
    }));
    f.push_back({"eval.downstream",
                 [](const ExperimentConfig& c) {
                   switch (c.eval.downstream) {
                     case DownstreamSchedule::None:
                       return std::string("none");
                     case DownstreamSchedule::All:
                       return std::string("all");
                     case DownstreamSchedule::Final:
                       break;
                   }
                   return std::string("final");
                 },
                 [](ExperimentConfig& c, std::string_view k, std::string_view v) {
                   const std::string s = trim(v);
                   if (s == "none") {
                     c.eval.downstream = DownstreamSchedule::None;
                   } else if (s == "final") {
                     c.eval.downstream = DownstreamSchedule::Final;
                   } else if (s == "all") {
                     c.eval.downstream = DownstreamSchedule::All;
                   } else {
                     bad_value(k, v, "expected none, final or all");
                   }
                 }});
    f.push_back(int_field("eval.downstream_restarts",
                          [](ExperimentConfig& c) -> int& { return c.eval.downstream_restarts; }));
    f.push_back(bool_field("metrics.wall_time",
                           [](ExperimentConfig& c) -> bool& { return c.record_wall_time; }));
    f.push_back({"output.dir", [](const ExperimentConfig& c) { return c.output_dir; },
                 [](ExperimentConfig& c, std::string_view, std::string_view v) {
                   c.output_dir = trim(v);
                 }});
    for (EnvId id : {EnvId::MountainCar, EnvId::Pendulum, EnvId::CartPole}) add_env_fields(f, id);
    return f;
  }();
  return table;
}

}  // namespace

std::string_view method_name(Method method) {
  switch (method) {
    case Method::RhcUs:
      return "rhc-us";
    case Method::RhcEvr:
      return "rhc-evr";
    case Method::Rand:
      return "rand";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  if (name == "rhc-us") return Method::RhcUs;
  if (name == "rhc-evr") return Method::RhcEvr;
  if (name == "rand") return Method::Rand;
  throw InvalidInput(fmt::format("unknown method '{}'", name));
}

int ExperimentConfig::features_for(EnvId id) const {
  return num_features > 0 ? num_features : default_features[static_cast<std::size_t>(id)];
}

ExplorerOptions ExperimentConfig::explorer_for(EnvId id, Method method) const {
  ExplorerOptions options = explorer;
  options.num_features = features_for(id);
  options.objective = method == Method::RhcEvr ? ObjectiveKind::ExpectedVarianceReduction
                                               : ObjectiveKind::UncertaintySampling;
  return options;
}

void set_config_value(ExperimentConfig& config, std::string_view key, std::string_view value) {
  const std::string k = trim(key);
  for (const Field& field : fields()) {
    if (field.key == k) {
      field.set(config, k, trim(value));
      return;
    }
  }
  throw ConfigError(fmt::format("{}: unknown key", k));
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig config;
  std::istringstream in{std::string(text)};
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto sep = body.find_first_of("=:");
    if (sep == std::string::npos) {
      throw ConfigError(fmt::format("line {}: expected 'key = value'", number));
    }
    set_config_value(config, body.substr(0, sep), body.substr(sep + 1));
  }
  validate_config(config);
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config file '{}'", path));
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_config(buffer.str());
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", path, e.what()));
  }
}

void validate_config(const ExperimentConfig& c) {
  if (c.envs.empty()) throw ConfigError("env: at least one environment is required");
  if (c.methods.empty()) throw ConfigError("method: at least one method is required");
  if (c.episodes < 1) throw ConfigError("episodes: must be at least 1");
  if (c.seeds.empty()) throw ConfigError("seeds: must not be empty");
  if (c.num_features < 0) throw ConfigError("rff.features: must be nonnegative");
  if (c.explorer.horizon < 0) throw ConfigError("explorer.horizon: must be nonnegative");
  if (c.explorer.replan_interval < 0) {
    throw ConfigError("explorer.replan_interval: must be nonnegative");
  }
  if (c.explorer.init_candidates < 0) {
    throw ConfigError("explorer.init_candidates: must be nonnegative");
  }
  if (!(c.explorer.alpha > 0.0)) throw ConfigError("blr.alpha: must be positive");
  if (!(c.explorer.initial_beta > 0.0)) throw ConfigError("blr.initial_beta: must be positive");
  if (c.explorer.fixed_beta && !(*c.explorer.fixed_beta > 0.0)) {
    throw ConfigError("blr.beta: must be positive or 'fit'");
  }
  if (!(c.explorer.holdout_fraction > 0.0 && c.explorer.holdout_fraction < 1.0)) {
    throw ConfigError("blr.holdout_fraction: must lie in (0, 1)");
  }
  if (c.explorer.holdout_block < 1) throw ConfigError("blr.holdout_block: must be positive");
  if (!(c.explorer.initial_bandwidth > 0.0)) {
    throw ConfigError("rff.initial_bandwidth: must be positive");
  }
  if (!(c.explorer.bandwidth_scale_floor >= 0.0)) {
    throw ConfigError("rff.bandwidth_scale_floor: must be nonnegative");
  }
  if (!(c.explorer.bandwidth_floor > 0.0)) throw ConfigError("rff.bandwidth_floor: must be positive");
  const SolverOptions& s = c.explorer.solver;
  if (!(s.penalty_init > 0.0) || !(s.penalty_growth > 1.0) || !(s.penalty_max >= s.penalty_init)) {
    throw ConfigError("solver.penalty_*: need penalty_init > 0, growth > 1, max >= init");
  }
  if (s.max_outer < 1 || s.max_inner < 1 || s.memory < 1) {
    throw ConfigError("solver.max_outer, solver.max_inner, solver.memory: must be positive");
  }
  if (!(s.feasibility_tol > 0.0) || !(s.gradient_tol > 0.0)) {
    throw ConfigError("solver tolerances must be positive");
  }
  if (c.eval.test_trajectories < 1 || c.eval.test_length < 1 || c.eval.oracle_samples < 2) {
    throw ConfigError("eval: test set and oracle sizes must be positive");
  }
  if (c.eval.downstream_restarts < 0) {
    throw ConfigError("eval.downstream_restarts: must be nonnegative");
  }
  for (const EnvSpec& spec : c.env_specs) {
    try {
      validate(spec);
    } catch (const InvalidInput& e) {
      throw ConfigError(fmt::format("env.{}: {}", env_name(spec.id), e.what()));
    }
  }
  for (EnvId id : c.envs) {
    const int m = c.features_for(id);
    if (m < 1) throw ConfigError(fmt::format("rff.features.{}: must be positive", env_name(id)));
    const int horizon = c.explorer.horizon > 0 ? c.explorer.horizon : c.env(id).episode_len;
    for (Method method : c.methods) {
      if (method == Method::RhcEvr && !c.force_evr && !evr_within_gate(m, horizon)) {
        throw ConfigError(fmt::format(
            "method: rhc-evr on {} needs m <= {} and T <= {} (got m = {}, T = {}); "
            "set evr.force = true to override",
            env_name(id), kEvrMaxFeatures, kEvrMaxHorizon, m, horizon));
      }
    }
  }
}

std::string serialize_config(const ExperimentConfig& config) {
  std::string out;
  for (const Field& field : fields()) out += fmt::format("{} = {}\n", field.key, field.get(config));
  return out;
}

std::string run_config_hash(const ExperimentConfig& config, EnvId env, Method method) {
  ExperimentConfig c = config;
  c.envs = {env};
  c.methods = {method};
  const std::string own_env = fmt::format("env.{}.", env_name(env));
  const std::string own_features = fmt::format("rff.features.{}", env_name(env));
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (const Field& field : fields()) {
    const std::string& k = field.key;
    if (k == "seeds" || k == "episodes" || k == "output.dir" || k == "metrics.wall_time" ||
        k == "evr.force") {
      continue;
    }
    if (k.rfind("env.", 0) == 0 && k.rfind(own_env, 0) != 0) continue;
    if (k.rfind("rff.features.", 0) == 0 && k != own_features) continue;
    for (char ch : fmt::format("{}={}\n", k, field.get(c))) {
      h ^= static_cast<unsigned char>(ch);
      h *= 1099511628211ULL;
    }
  }
  return fmt::format("{:016x}", h);
}

}  // namespace rhc
