#pragma once

// Episode-granular replay store with "future" hindsight relabeling. Rewards
// are never stored; they are recomputed from (next observation, goal, mask)
// whenever a transition is sampled.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cgm/env.hpp"
#include "cgm/error.hpp"
#include "cgm/goal_mask.hpp"
#include "cgm/rng.hpp"

namespace cgm {

struct Transition {
  Observation obs;
  Goal goal;  // masked goal in effect at this step
  GoalMask mask;
  Action action;
  Observation next_obs;
  std::int64_t episode_id = 0;
  int t = 0;

  bool operator==(const Transition&) const = default;
};

struct EpisodeRecord {
  std::vector<Transition> transitions;
  std::vector<bool> terminal_success;  // per dimension, against the unmasked goal

  std::size_t size() const { return transitions.size(); }
  bool operator==(const EpisodeRecord&) const = default;
};

/// Everything needed to turn (next observation, goal, mask) into a reward.
struct GoalSpace {
  EnvTag tag = EnvTag::lift_world;
  double epsilon = 0.05;

  int dims() const { return goal_dim(tag); }
};

struct HerConfig {
  int k = 6;  // relabeled : original ratio, so a fraction k/(k+1) is relabeled

  double relabel_probability() const { return static_cast<double>(k) / static_cast<double>(k + 1); }
  void validate() const { detail::require<ConfigError>(k >= 0, "hindsight ratio k must be >= 0"); }
};

struct SampledTransition {
  Transition transition;
  double reward = 0.0;
  bool relabeled = false;
};

inline double recompute_reward(const Transition& tr, const GoalSpace& space) {
  return reward(achieved_goal(tr.next_obs, space.tag), tr.goal, tr.mask, space.epsilon);
}

/// Copy of transition t whose goal is the achieved goal of o_{t+l},
/// l uniform in [1, len - t]. Mask, observations and action are untouched.
inline Transition her_substitute(const EpisodeRecord& episode, int t, Rng& rng, const GoalSpace& space) {
  const int len = static_cast<int>(episode.size());
  if (t < 0 || t >= len) throw IndexError("hindsight index " + std::to_string(t) + " outside episode of length " +
                                          std::to_string(len));
  const int l = static_cast<int>(rng.uniform_int(1, len - t));
  Transition out = episode.transitions[static_cast<std::size_t>(t)];
  // o_{t+l} is the next observation of transition t+l-1.
  out.goal = achieved_goal(episode.transitions[static_cast<std::size_t>(t + l - 1)].next_obs, space.tag);
  return out;
}

class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, GoalSpace space) : capacity_(capacity), space_(space) {
    detail::require<ConfigError>(capacity > 0, "replay capacity must be positive");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return total_; }
  std::size_t num_episodes() const { return episodes_.size(); }
  bool empty() const { return total_ == 0; }
  const GoalSpace& space() const { return space_; }
  const std::deque<EpisodeRecord>& episodes() const { return episodes_; }

  void store_episode(EpisodeRecord episode) {
    validate(episode);
    total_ += episode.size();
    episodes_.push_back(std::move(episode));
    while (total_ > capacity_) {
      total_ -= episodes_.front().size();
      episodes_.pop_front();
    }
    starts_.clear();
    std::size_t acc = 0;
    for (const auto& e : episodes_) {
      starts_.push_back(acc);
      acc += e.size();
    }
  }

  /// Locates the global transition index `i` as (episode, step).
  std::pair<std::size_t, int> locate(std::size_t i) const {
    if (i >= total_) throw IndexError("transition index out of range");
    const auto it = std::upper_bound(starts_.begin(), starts_.end(), i);
    const auto ep = static_cast<std::size_t>(std::distance(starts_.begin(), it) - 1);
    return {ep, static_cast<int>(i - starts_[ep])};
  }

  /// Uniform transitions; each independently relabeled with probability
  /// k/(k+1). Every returned reward is recomputed.
  std::vector<SampledTransition> sample_batch(std::size_t batch_size, const HerConfig& her, Rng& rng) const {
    if (empty()) throw EmptyStoreError("cannot sample from an empty replay buffer");
    detail::require<ConfigError>(batch_size > 0, "batch size must be positive");
    her.validate();
    const double p = her.relabel_probability();
    std::vector<SampledTransition> batch;
    batch.reserve(batch_size);
    for (std::size_t b = 0; b < batch_size; ++b) {
      const auto [ep, t] = locate(static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(total_) - 1)));
      const auto& episode = episodes_[ep];
      SampledTransition s;
      if (her.k > 0 && rng.bernoulli(p)) {
        s.transition = her_substitute(episode, t, rng, space_);
        s.relabeled = true;
      } else {
        s.transition = episode.transitions[static_cast<std::size_t>(t)];
      }
      s.reward = recompute_reward(s.transition, space_);
      batch.push_back(std::move(s));
    }
    return batch;
  }

 private:
  void validate(const EpisodeRecord& e) const {
    if (e.transitions.empty()) throw ValidationError("episode is empty");
    if (e.size() > capacity_) throw ValidationError("episode longer than buffer capacity");
    const auto n = static_cast<std::size_t>(space_.dims());
    const auto& first = e.transitions.front();
    if (e.terminal_success.size() != n) throw ValidationError("terminal success vector has wrong length");
    for (std::size_t i = 0; i < e.size(); ++i) {
      const auto& tr = e.transitions[i];
      if (tr.t != static_cast<int>(i)) throw ValidationError("episode step indices are not contiguous from 0");
      if (tr.episode_id != first.episode_id) throw ValidationError("mixed episode ids in one episode");
      if (!(tr.mask == first.mask)) throw ValidationError("mask changes within an episode");
      if (tr.goal.size() != n || tr.mask.size() != n) throw ValidationError("goal/mask length != goal dimension");
    }
  }

  std::size_t capacity_;
  GoalSpace space_;
  std::deque<EpisodeRecord> episodes_;
  std::vector<std::size_t> starts_;
  std::size_t total_ = 0;
};

// ---------------------------------------------------------------------------
// Snapshot: CSV, one row per transition, doubles printed with 17 significant
// digits (exact round trip). Columns:
//   episode,t,mask,terminal,obs_0..obs_12,goal_0..goal_{n-1},
//   action_0..action_3,next_0..next_12
// ---------------------------------------------------------------------------

namespace replay_detail {

inline std::string bits_to_string(const std::vector<bool>& v) {
  std::string s;
  for (bool b : v) s.push_back(b ? '1' : '0');
  return s;
}

inline Observation obs_from(const std::vector<double>& v, std::size_t off) {
  Observation o;
  for (int i = 0; i < 3; ++i) {
    o.gripper[i] = v[off + i];
    o.block[i] = v[off + 3 + i];
    o.gripper_velocity[i] = v[off + 6 + i];
    o.block_velocity[i] = v[off + 9 + i];
  }
  o.grasp = v[off + 12];
  return o;
}

}  // namespace replay_detail

inline void save_snapshot(std::ostream& out, const ReplayBuffer& buffer) {
  const int n = buffer.space().dims();
  out << "episode,t,mask,terminal";
  for (int i = 0; i < Observation::kSize; ++i) out << ",obs_" << i;
  for (int i = 0; i < n; ++i) out << ",goal_" << i;
  for (int i = 0; i < Action::kSize; ++i) out << ",action_" << i;
  for (int i = 0; i < Observation::kSize; ++i) out << ",next_" << i;
  out << '\n';
  out.precision(17);
  for (const auto& ep : buffer.episodes()) {
    const auto terminal = replay_detail::bits_to_string(ep.terminal_success);
    for (const auto& tr : ep.transitions) {
      out << tr.episode_id << ',' << tr.t << ',' << tr.mask.to_string() << ',' << terminal;
      for (double v : tr.obs.to_array()) out << ',' << v;
      for (double v : tr.goal) out << ',' << v;
      for (double v : tr.action.to_array()) out << ',' << v;
      for (double v : tr.next_obs.to_array()) out << ',' << v;
      out << '\n';
    }
  }
}

inline ReplayBuffer load_snapshot(std::istream& in, std::size_t capacity, GoalSpace space) {
  ReplayBuffer buffer(capacity, space);
  const auto n = static_cast<std::size_t>(space.dims());
  const std::size_t expected = 4 + 2 * Observation::kSize + n + Action::kSize;
  std::string line;
  if (!std::getline(in, line)) throw InputError("empty replay snapshot");
  EpisodeRecord current;
  auto flush = [&] {
    if (!current.transitions.empty()) buffer.store_episode(std::move(current));
    current = {};
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != expected) throw InputError("replay snapshot row has " + std::to_string(cells.size()) +
                                                   " cells, expected " + std::to_string(expected));
    Transition tr;
    tr.episode_id = std::stoll(cells[0]);
    tr.t = std::stoi(cells[1]);
    tr.mask = GoalMask::from_string(cells[2]);
    std::vector<double> v;
    for (std::size_t i = 4; i < cells.size(); ++i) v.push_back(std::strtod(cells[i].c_str(), nullptr));
    tr.obs = replay_detail::obs_from(v, 0);
    tr.goal.assign(v.begin() + Observation::kSize, v.begin() + Observation::kSize + static_cast<long>(n));
    const std::size_t a_off = Observation::kSize + n;
    tr.action = Action::from_span(std::span<const double>(v).subspan(a_off, Action::kSize));
    tr.next_obs = replay_detail::obs_from(v, a_off + Action::kSize);
    if (!current.transitions.empty() && current.transitions.front().episode_id != tr.episode_id) flush();
    if (current.transitions.empty()) {
      for (char c : cells[3]) current.terminal_success.push_back(c == '1');
    }
    current.transitions.push_back(std::move(tr));
  }
  flush();
  return buffer;
}

}  // namespace cgm
