#pragma once

// Kinematic goal-conditioned manipulation worlds.
//
// planar-push: the block stays on the surface and moves only when the
//   gripper, held low, presses into it. Goal = block (x, y).
// lift-world: same pushing contact while the block rests on the surface,
//   plus grasping. A positive grasp command within the attach radius locks
//   the block to the gripper; releasing lets it fall at a fixed rate.
//   Goal = block (x, y, z), so any elevated target needs the
//   reach -> grasp -> carry sequence.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cgm/error.hpp"
#include "cgm/goal_mask.hpp"
#include "cgm/rng.hpp"

namespace cgm {

using Goal = std::vector<double>;
using Vec3 = std::array<double, 3>;

enum class EnvTag { planar_push, lift_world };

inline std::string_view to_string(EnvTag tag) {
  return tag == EnvTag::planar_push ? "push" : "lift";
}

inline EnvTag parse_env_tag(std::string_view s) {
  if (s == "push" || s == "planar-push") return EnvTag::planar_push;
  if (s == "lift" || s == "lift-world") return EnvTag::lift_world;
  throw ConfigError("unknown environment tag '" + std::string(s) + "'");
}

inline int goal_dim(EnvTag tag) { return tag == EnvTag::planar_push ? 2 : 3; }

struct EnvConfig {
  double epsilon = 0.05;        // per-dimension success threshold
  int horizon = 50;             // steps per episode
  double step_size = 0.04;      // gripper displacement at |action| = 1
  double attach_radius = 0.05;  // grasp succeeds within this distance of the block
  double fall_rate = 0.08;      // released block drops this far per step
  double push_radius = 0.05;    // gripper/block contact distance in the plane
  double contact_height = 0.05; // gripper must be at or below this z to push
  Vec3 workspace_lo{0.0, 0.0, 0.0};
  Vec3 workspace_hi{1.0, 1.0, 0.5};
  double spawn_lo = 0.25;       // gripper, block and goal xy spawn in [spawn_lo, spawn_hi]^2
  double spawn_hi = 0.75;
  double gripper_z_hi = 0.2;    // gripper z spawns in [0, gripper_z_hi]
  double goal_z_hi = 0.45;      // lift goals: z uniform in [0, goal_z_hi]
  double spawn_separation = 0.1;

  void validate() const {
    detail::require<ConfigError>(epsilon > 0.0, "epsilon must be positive");
    detail::require<ConfigError>(horizon > 0, "horizon must be positive");
    detail::require<ConfigError>(step_size > 0.0, "step_size must be positive");
    detail::require<ConfigError>(attach_radius > 0.0 && push_radius > 0.0, "radii must be positive");
    detail::require<ConfigError>(fall_rate > 0.0, "fall_rate must be positive");
    for (int i = 0; i < 3; ++i)
      detail::require<ConfigError>(workspace_lo[i] < workspace_hi[i], "empty workspace");
    detail::require<ConfigError>(spawn_lo >= workspace_lo[0] && spawn_hi <= workspace_hi[0] && spawn_lo < spawn_hi,
                                 "spawn region must lie inside the workspace");
    detail::require<ConfigError>(goal_z_hi >= 0.0 && goal_z_hi <= workspace_hi[2], "goal z range outside workspace");
  }
};

struct Observation {
  Vec3 gripper{};
  Vec3 block{};
  Vec3 gripper_velocity{};
  Vec3 block_velocity{};
  double grasp = 0.0;  // 1 while the block is held

  static constexpr int kSize = 13;

  bool operator==(const Observation&) const = default;

  std::array<double, kSize> to_array() const {
    return {gripper[0], gripper[1], gripper[2], block[0], block[1], block[2],
            gripper_velocity[0], gripper_velocity[1], gripper_velocity[2],
            block_velocity[0], block_velocity[1], block_velocity[2], grasp};
  }
};

struct Action {
  Vec3 move{};
  double grasp = -1.0;

  static constexpr int kSize = 4;

  bool operator==(const Action&) const = default;

  std::array<double, kSize> to_array() const { return {move[0], move[1], move[2], grasp}; }

  static Action from_span(std::span<const double> v) {
    detail::require<ShapeError>(v.size() == kSize, "action vector must have 4 components");
    return Action{{v[0], v[1], v[2]}, v[3]};
  }

  Action clamped() const {
    auto c = [](double x) { return std::clamp(x, -1.0, 1.0); };
    return Action{{c(move[0]), c(move[1]), c(move[2])}, c(grasp)};
  }
};

struct EnvState {
  Observation obs;
  int t = 0;
  int horizon = 50;
  EnvTag tag = EnvTag::lift_world;
  std::uint64_t seed = 0;
  EnvConfig config;

  bool attached() const { return obs.grasp > 0.5; }
  bool done() const { return t >= horizon; }
};

/// Goal-space projection of an observation.
inline Goal achieved_goal(const Observation& obs, EnvTag tag) {
  if (tag == EnvTag::planar_push) return {obs.block[0], obs.block[1]};
  return {obs.block[0], obs.block[1], obs.block[2]};
}

/// Component i is true iff |achieved_i - goal_i| <= epsilon.
inline std::vector<bool> subgoal_success(std::span<const double> achieved, std::span<const double> goal,
                                         double epsilon) {
  detail::require<ShapeError>(achieved.size() == goal.size(), "achieved/goal length mismatch");
  detail::require<ConfigError>(epsilon > 0.0, "epsilon must be positive");
  std::vector<bool> out(goal.size());
  for (std::size_t i = 0; i < goal.size(); ++i) out[i] = std::abs(achieved[i] - goal[i]) <= epsilon;
  return out;
}

inline bool all_true(const std::vector<bool>& v) {
  return std::all_of(v.begin(), v.end(), [](bool b) { return b; });
}

/// Sparse masked reward: 0 when every mask-1 dimension is within epsilon,
/// -1 otherwise.
inline double reward(std::span<const double> achieved, std::span<const double> goal, const GoalMask& mask,
                     double epsilon) {
  detail::require<ShapeError>(mask.size() == goal.size(), "mask/goal length mismatch");
  const auto ok = subgoal_success(achieved, goal, epsilon);
  for (std::size_t i = 0; i < ok.size(); ++i)
    if (mask[i] && !ok[i]) return -1.0;
  return 0.0;
}

namespace env_detail {

inline constexpr int kContactSubsteps = 8;

inline double dist3(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

inline Vec3 clamp_to(const Vec3& p, const EnvConfig& c) {
  return {std::clamp(p[0], c.workspace_lo[0], c.workspace_hi[0]),
          std::clamp(p[1], c.workspace_lo[1], c.workspace_hi[1]),
          std::clamp(p[2], c.workspace_lo[2], c.workspace_hi[2])};
}

}  // namespace env_detail

/// Seeded episode start. Gripper and block are separated by at least
/// `spawn_separation`; the goal is uniform over the goal box.
inline std::pair<EnvState, Goal> reset(EnvTag tag, std::uint64_t seed, const EnvConfig& config = {}) {
  config.validate();
  Rng rng(seed);
  EnvState s;
  s.tag = tag;
  s.seed = seed;
  s.horizon = config.horizon;
  s.config = config;
  s.obs.block = {rng.uniform(config.spawn_lo, config.spawn_hi), rng.uniform(config.spawn_lo, config.spawn_hi), 0.0};
  do {
    s.obs.gripper = {rng.uniform(config.spawn_lo, config.spawn_hi), rng.uniform(config.spawn_lo, config.spawn_hi),
                     rng.uniform(0.0, config.gripper_z_hi)};
  } while (env_detail::dist3(s.obs.gripper, s.obs.block) < config.spawn_separation);
  Goal goal{rng.uniform(config.spawn_lo, config.spawn_hi), rng.uniform(config.spawn_lo, config.spawn_hi)};
  if (tag == EnvTag::lift_world) goal.push_back(rng.uniform(0.0, config.goal_z_hi));
  return {s, goal};
}

inline EnvState step(const EnvState& state, const Action& raw_action) {
  if (state.t >= state.horizon)
    throw EpisodeOverrunError("step at t=" + std::to_string(state.t) + " beyond horizon " +
                              std::to_string(state.horizon));
  const EnvConfig& c = state.config;
  const Action a = raw_action.clamped();
  EnvState next = state;
  Observation& o = next.obs;
  const Vec3 prev_gripper = state.obs.gripper;
  const Vec3 prev_block = state.obs.block;

  o.gripper = env_detail::clamp_to(
      {prev_gripper[0] + a.move[0] * c.step_size, prev_gripper[1] + a.move[1] * c.step_size,
       prev_gripper[2] + a.move[2] * c.step_size},
      c);

  bool attached = false;
  if (state.tag == EnvTag::lift_world && a.grasp > 0.0)
    attached = state.attached() || env_detail::dist3(o.gripper, prev_block) <= c.attach_radius;

  if (attached) {
    o.block = o.gripper;
  } else {
    if (state.tag == EnvTag::lift_world) o.block[2] = std::max(0.0, prev_block[2] - c.fall_rate);
    if (state.tag == EnvTag::planar_push) o.block[2] = 0.0;
    const bool on_surface = o.block[2] == 0.0 && prev_block[2] == 0.0;
    if (on_surface && o.gripper[2] <= c.contact_height) {
      // Resolve contact along the planar path in short substeps so a fast
      // gripper cannot tunnel past the block centre and drag it backwards.
      for (int k = 1; k <= env_detail::kContactSubsteps; ++k) {
        const double f = static_cast<double>(k) / env_detail::kContactSubsteps;
        const double gx = prev_gripper[0] + (o.gripper[0] - prev_gripper[0]) * f;
        const double gy = prev_gripper[1] + (o.gripper[1] - prev_gripper[1]) * f;
        const double dx = o.block[0] - gx;
        const double dy = o.block[1] - gy;
        const double d = std::hypot(dx, dy);
        if (d < c.push_radius && d > 1e-12) {
          o.block[0] = gx + dx / d * c.push_radius;
          o.block[1] = gy + dy / d * c.push_radius;
          o.block = env_detail::clamp_to(o.block, c);
        }
      }
    }
  }

  for (int i = 0; i < 3; ++i) {
    o.gripper_velocity[i] = o.gripper[i] - prev_gripper[i];
    o.block_velocity[i] = o.block[i] - prev_block[i];
  }
  o.grasp = attached ? 1.0 : 0.0;
  next.t = state.t + 1;
  return next;
}

// ---------------------------------------------------------------------------
// Scripted controllers, used to check that both worlds are solvable within
// the horizon.
// ---------------------------------------------------------------------------

namespace env_detail {

/// Action moving `from` toward `to`, direction preserved under the [-1, 1] clamp.
inline Vec3 move_toward(const Vec3& from, const Vec3& to, double step_size) {
  Vec3 d{(to[0] - from[0]) / step_size, (to[1] - from[1]) / step_size, (to[2] - from[2]) / step_size};
  const double m = std::max({std::abs(d[0]), std::abs(d[1]), std::abs(d[2])});
  if (m > 1.0)
    for (double& x : d) x /= m;
  return d;
}

}  // namespace env_detail

inline Action scripted_lift_action(const Observation& obs, std::span<const double> goal, const EnvConfig& c) {
  Action a;
  a.grasp = 1.0;
  if (obs.grasp > 0.5) {
    a.move = env_detail::move_toward(obs.gripper, {goal[0], goal[1], goal[2]}, c.step_size);
  } else {
    a.move = env_detail::move_toward(obs.gripper, obs.block, c.step_size);
  }
  return a;
}

inline Action scripted_push_action(const Observation& obs, std::span<const double> goal, const EnvConfig& c) {
  constexpr double kLow = 0.02;
  constexpr double kHigh = 0.1;
  constexpr double kStandoff = 0.02;
  Action a;
  a.grasp = -1.0;
  const double gx = goal[0] - obs.block[0];
  const double gy = goal[1] - obs.block[1];
  const double gd = std::hypot(gx, gy);
  if (std::max(std::abs(gx), std::abs(gy)) <= 0.2 * c.epsilon || gd < 1e-9) {
    // Done: back straight off the block.
    a.move = env_detail::move_toward(obs.gripper, {obs.gripper[0], obs.gripper[1], std::max(obs.gripper[2], kHigh)},
                                     c.step_size);
    return a;
  }
  const double ux = gx / gd, uy = gy / gd;
  const double rx = obs.block[0] - obs.gripper[0];
  const double ry = obs.block[1] - obs.gripper[1];
  const double along = rx * ux + ry * uy;
  const double perp = std::abs(rx * uy - ry * ux);
  const bool low = obs.gripper[2] <= c.contact_height;
  const Vec3 behind{obs.block[0] - ux * (c.push_radius + kStandoff), obs.block[1] - uy * (c.push_radius + kStandoff),
                    kLow};
  if (low && along > 0.0 && perp < 0.01 && along < c.push_radius + kStandoff + 0.01) {
    const Vec3 target{goal[0] - ux * c.push_radius, goal[1] - uy * c.push_radius, kLow};
    a.move = env_detail::move_toward(obs.gripper, target, c.step_size);
  } else if (!low) {
    const double bx = behind[0] - obs.gripper[0], by = behind[1] - obs.gripper[1];
    if (std::hypot(bx, by) < 1e-3)
      a.move = env_detail::move_toward(obs.gripper, behind, c.step_size);
    else
      a.move = env_detail::move_toward(obs.gripper, {behind[0], behind[1], std::max(obs.gripper[2], kHigh)},
                                       c.step_size);
  } else {
    a.move = env_detail::move_toward(obs.gripper, {obs.gripper[0], obs.gripper[1], kHigh}, c.step_size);
  }
  return a;
}

inline Action scripted_action(EnvTag tag, const Observation& obs, std::span<const double> goal, const EnvConfig& c) {
  return tag == EnvTag::planar_push ? scripted_push_action(obs, goal, c) : scripted_lift_action(obs, goal, c);
}

// ---------------------------------------------------------------------------
// Trajectory dump: one CSV row per step.
// ---------------------------------------------------------------------------

struct TrajectoryRow {
  int t = 0;
  Observation obs;  // state the action was taken from
  Action action;
  double reward = 0.0;
};

inline void write_trajectory_csv(std::ostream& out, std::span<const TrajectoryRow> rows) {
  out << "t,gripper_x,gripper_y,gripper_z,block_x,block_y,block_z,grasp,"
         "action_dx,action_dy,action_dz,action_grasp,reward\n";
  out.precision(17);
  for (const auto& r : rows) {
    out << r.t;
    for (double v : r.obs.gripper) out << ',' << v;
    for (double v : r.obs.block) out << ',' << v;
    out << ',' << r.obs.grasp;
    for (double v : r.action.to_array()) out << ',' << v;
    out << ',' << r.reward << '\n';
  }
}

}  // namespace cgm
