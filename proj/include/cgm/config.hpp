#pragma once

// Run configuration: a flat `key = value` text format covering every tunable
// constant. Unknown keys are rejected. `#` starts a comment.

#include <cstdint>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cgm/ddpg.hpp"
#include "cgm/error.hpp"

namespace cgm {

inline constexpr std::string_view kLibraryVersion = "1.0.0";

enum class Algorithm { ddpg, ddpg_her };

inline std::string_view to_string(Algorithm a) { return a == Algorithm::ddpg ? "ddpg" : "ddpg+her"; }

inline Algorithm parse_algorithm(std::string_view s) {
  if (s == "ddpg") return Algorithm::ddpg;
  if (s == "ddpg+her" || s == "her") return Algorithm::ddpg_her;
  throw ConfigError("unknown algorithm '" + std::string(s) + "'");
}

struct RunConfig {
  TrainerConfig trainer;
  Algorithm algorithm = Algorithm::ddpg_her;
  int her_k = 6;             // used when algorithm is ddpg+her
  int epochs = 150;
  int checkpoint_every = 0;  // 0: only the final checkpoint
  double threshold = 0.5;    // convergence threshold for summaries
  int stop_after_crossing = -1;  // >= 0: end the run this many epochs after first reaching `threshold`

  /// Resolved trainer config (hindsight ratio follows the algorithm).
  TrainerConfig resolved() const {
    TrainerConfig t = trainer;
    t.her.k = algorithm == Algorithm::ddpg_her ? her_k : 0;
    t.rollout.horizon = t.env_cfg.horizon;
    return t;
  }

  void validate() const {
    detail::require<ConfigError>(epochs >= 0, "epochs must be >= 0");
    detail::require<ConfigError>(checkpoint_every >= 0, "checkpoint_every must be >= 0");
    detail::require<ConfigError>(stop_after_crossing >= -1, "stop_after_crossing must be >= -1");
    detail::require<ConfigError>(threshold > 0.0 && threshold < 1.0, "threshold must lie in (0, 1)");
    detail::require<ConfigError>(her_k >= 0, "her_k must be >= 0");
    resolved().validate();
  }
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty()) throw ConfigError("key '" + key + "': '" + v + "' is not a number");
  return d;
}

inline long long to_int(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  long long n = 0;
  try {
    n = std::stoll(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty()) throw ConfigError("key '" + key + "': '" + v + "' is not an integer");
  return n;
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  std::uint64_t n = 0;
  try {
    n = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty() || v[0] == '-')
    throw ConfigError("key '" + key + "': '" + v + "' is not a non-negative integer");
  return n;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "': '" + v + "' is not on/off");
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define CGM_REAL(name, expr)                                                                          \
  {name, {[](const RunConfig& c) { return fmt(c.expr); },                                             \
          [](RunConfig& c, const std::string& v) { c.expr = to_double(name, v); }}}
#define CGM_INT(name, expr, type)                                                                     \
  {name, {[](const RunConfig& c) { return std::to_string(c.expr); },                                  \
          [](RunConfig& c, const std::string& v) { c.expr = static_cast<type>(to_int(name, v)); }}}
#define CGM_BOOL(name, expr)                                                                          \
  {name, {[](const RunConfig& c) { return std::string(c.expr ? "on" : "off"); },                      \
          [](RunConfig& c, const std::string& v) { c.expr = to_bool(name, v); }}}

inline const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"env", {[](const RunConfig& c) { return std::string(to_string(c.trainer.env)); },
               [](RunConfig& c, const std::string& v) { c.trainer.env = parse_env_tag(v); }}},
      {"algo", {[](const RunConfig& c) { return std::string(to_string(c.algorithm)); },
                [](RunConfig& c, const std::string& v) { c.algorithm = parse_algorithm(v); }}},
      CGM_BOOL("cgm", trainer.cgm),
      CGM_REAL("cg", trainer.curriculum.target_success),
      CGM_REAL("kappa", trainer.curriculum.sharpness),
      {"form", {[](const RunConfig& c) { return std::string(to_string(c.trainer.curriculum.form)); },
                [](RunConfig& c, const std::string& v) { c.trainer.curriculum.form = parse_sampling_form(v); }}},
      CGM_BOOL("include_zero_mask", trainer.curriculum.include_zero_mask),
      {"seed", {[](const RunConfig& c) { return std::to_string(c.trainer.seed); },
                [](RunConfig& c, const std::string& v) { c.trainer.seed = to_uint("seed", v); }}},
      CGM_INT("epochs", epochs, int),
      CGM_REAL("threshold", threshold),
      CGM_INT("checkpoint_every", checkpoint_every, int),
      CGM_INT("stop_after_crossing", stop_after_crossing, int),
      CGM_INT("n_eval", trainer.n_eval, int),
      CGM_INT("window", trainer.tracker_window, int),
      CGM_INT("n_parallel", trainer.rollout.n_parallel, int),
      CGM_INT("n_cycles", trainer.rollout.n_cycles, int),
      CGM_INT("opt_steps", trainer.rollout.opt_steps, int),
      CGM_INT("batch_size", trainer.rollout.batch_size, int),
      CGM_REAL("gamma", trainer.rollout.gamma),
      CGM_REAL("tau", trainer.rollout.tau),
      CGM_INT("workers", trainer.rollout.workers, int),
      CGM_REAL("sigma", trainer.exploration.sigma),
      CGM_REAL("explore_rate", trainer.exploration.random_rate),
      CGM_INT("her_k", her_k, int),
      CGM_INT("buffer_capacity", trainer.buffer_capacity, std::size_t),
      {"hidden", {[](const RunConfig& c) {
                    std::string s;
                    for (std::size_t i = 0; i < c.trainer.network.hidden.size(); ++i)
                      s += (i ? "," : "") + std::to_string(c.trainer.network.hidden[i]);
                    return s;
                  },
                  [](RunConfig& c, const std::string& v) {
                    std::vector<int> h;
                    std::stringstream ss(v);
                    std::string part;
                    while (std::getline(ss, part, ',')) h.push_back(static_cast<int>(to_int("hidden", trim(part))));
                    c.trainer.network.hidden = h;
                  }}},
      CGM_REAL("lr_actor", trainer.network.lr_actor),
      CGM_REAL("lr_critic", trainer.network.lr_critic),
      CGM_REAL("action_l2", trainer.network.action_l2),
      CGM_REAL("clip_obs", trainer.network.clip_obs),
      CGM_REAL("norm_min_std", trainer.network.norm_min_std),
      CGM_BOOL("remask_goals", trainer.network.remask_goals),
      CGM_REAL("epsilon", trainer.env_cfg.epsilon),
      CGM_INT("horizon", trainer.env_cfg.horizon, int),
      CGM_REAL("step_size", trainer.env_cfg.step_size),
      CGM_REAL("attach_radius", trainer.env_cfg.attach_radius),
      CGM_REAL("fall_rate", trainer.env_cfg.fall_rate),
      CGM_REAL("push_radius", trainer.env_cfg.push_radius),
      CGM_REAL("contact_height", trainer.env_cfg.contact_height),
      CGM_REAL("spawn_lo", trainer.env_cfg.spawn_lo),
      CGM_REAL("spawn_hi", trainer.env_cfg.spawn_hi),
      CGM_REAL("gripper_z_hi", trainer.env_cfg.gripper_z_hi),
      CGM_REAL("goal_z_hi", trainer.env_cfg.goal_z_hi),
      CGM_REAL("spawn_separation", trainer.env_cfg.spawn_separation),
  };
  return table;
}

#undef CGM_REAL
#undef CGM_INT
#undef CGM_BOOL

}  // namespace config_detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, f] : config_detail::fields()) keys.push_back(k);
  return keys;
}

inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& [k, f] : config_detail::fields()) {
    if (k == key) {
      f.set(cfg, config_detail::trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

inline std::string get_config_value(const RunConfig& cfg, const std::string& key) {
  for (const auto& [k, f] : config_detail::fields())
    if (k == key) return f.get(cfg);
  throw ConfigError("unknown config key '" + key + "'");
}

/// Applies "key=value" (or "key = value") assignments on top of `cfg`.
inline void apply_assignment(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set_config_value(cfg, config_detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

inline RunConfig parse_config(std::istream& in, RunConfig base = {}) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    try {
      apply_assignment(base, line);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

inline void write_config(std::ostream& out, const RunConfig& cfg) {
  out << "# cgm run config, library version " << kLibraryVersion << '\n';
  for (const auto& [k, f] : config_detail::fields()) out << k << " = " << f.get(cfg) << '\n';
}

}  // namespace cgm
