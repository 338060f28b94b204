#pragma once

// Goal-conditioned DDPG: actor/critic with target copies, exploration,
// rollout workers, hindsight training batches, evaluation and the epoch loop
// that feeds evaluation outcomes to the curriculum.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cgm/curriculum.hpp"
#include "cgm/env.hpp"
#include "cgm/error.hpp"
#include "cgm/nn.hpp"
#include "cgm/replay.hpp"
#include "cgm/rng.hpp"

namespace cgm {

/// Running mean/std per input dimension; normalized values are clipped.
class Normalizer {
 public:
  Normalizer() = default;
  Normalizer(int dims, double min_std = 1e-2, double clip = 5.0)
      : sum_(nn::Vector::Zero(dims)), sumsq_(nn::Vector::Zero(dims)), min_std_(min_std), clip_(clip) {
    recompute();
  }

  int dims() const { return static_cast<int>(sum_.size()); }
  double count() const { return count_; }
  const nn::Vector& mean() const { return mean_; }
  const nn::Vector& stddev() const { return std_; }
  double clip() const { return clip_; }

  template <typename Range>
  void add(const Range& values) {
    detail::require<ShapeError>(static_cast<Eigen::Index>(std::size(values)) == sum_.size(),
                                "normalizer input length mismatch");
    Eigen::Index i = 0;
    for (double v : values) {
      sum_(i) += v;
      sumsq_(i) += v * v;
      ++i;
    }
    count_ += 1.0;
  }

  /// Stats are only refreshed here so that a whole cycle sees fixed values.
  void recompute() {
    if (count_ <= 0.0) {
      mean_ = nn::Vector::Zero(sum_.size());
      std_ = nn::Vector::Ones(sum_.size());
      return;
    }
    mean_ = sum_ / count_;
    const nn::Vector var = (sumsq_ / count_ - mean_.cwiseProduct(mean_)).cwiseMax(min_std_ * min_std_);
    std_ = var.cwiseSqrt();
  }

  template <typename Range>
  void normalize_into(const Range& values, Eigen::Ref<nn::Vector> out) const {
    Eigen::Index i = 0;
    for (double v : values) {
      out(i) = std::clamp((v - mean_(i)) / std_(i), -clip_, clip_);
      ++i;
    }
  }

  void save(std::ostream& out) const {
    out.precision(17);
    out << sum_.size() << ' ' << count_ << ' ' << min_std_ << ' ' << clip_ << '\n';
    for (Eigen::Index i = 0; i < sum_.size(); ++i) out << sum_(i) << ' ' << sumsq_(i) << '\n';
  }

  static Normalizer load(std::istream& in) {
    Eigen::Index n = 0;
    Normalizer z;
    if (!(in >> n >> z.count_ >> z.min_std_ >> z.clip_) || n <= 0) throw InputError("bad normalizer file");
    z.sum_.resize(n);
    z.sumsq_.resize(n);
    for (Eigen::Index i = 0; i < n; ++i)
      if (!(in >> z.sum_(i) >> z.sumsq_(i))) throw InputError("truncated normalizer file");
    z.recompute();
    return z;
  }

  bool operator==(const Normalizer& o) const {
    return count_ == o.count_ && sum_ == o.sum_ && sumsq_ == o.sumsq_;
  }

 private:
  nn::Vector sum_, sumsq_, mean_, std_;
  double count_ = 0.0;
  double min_std_ = 1e-2;
  double clip_ = 5.0;
};

struct ExplorationConfig {
  double sigma = 0.2;        // gaussian action noise
  double random_rate = 0.3;  // probability of a uniform random action

  void validate() const {
    detail::require<ConfigError>(sigma >= 0.0, "sigma must be >= 0");
    detail::require<ConfigError>(random_rate >= 0.0 && random_rate <= 1.0, "random action rate must lie in [0, 1]");
  }
};

struct RolloutConfig {
  int n_parallel = 4;   // rollouts per cycle
  int n_cycles = 64;    // cycles per epoch
  int horizon = 50;
  int opt_steps = 40;   // optimization steps after each cycle
  int batch_size = 128;
  double gamma = 0.98;
  double tau = 0.05;    // polyak rate
  int workers = 1;      // threads used for the parallel rollouts

  void validate() const {
    detail::require<ConfigError>(n_parallel > 0 && n_cycles > 0 && horizon > 0 && opt_steps >= 0 && batch_size > 0,
                                 "rollout counts must be positive");
    detail::require<ConfigError>(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0, 1)");
    detail::require<ConfigError>(tau >= 0.0 && tau <= 1.0, "tau must lie in [0, 1]");
    detail::require<ConfigError>(workers >= 1, "workers must be >= 1");
  }
};

struct NetworkConfig {
  std::vector<int> hidden{64, 64};
  double lr_actor = 1e-3;
  double lr_critic = 1e-3;
  double action_l2 = 1.0;  // penalty on squared pre-noise actions in the actor loss
  double clip_obs = 5.0;
  double norm_min_std = 1e-2;
  bool remask_goals = true;  // learner sees masked dims as the achieved value of the fed observation

  void validate() const {
    detail::require<ConfigError>(!hidden.empty(), "need at least one hidden layer");
    for (int h : hidden) detail::require<ConfigError>(h > 0, "hidden sizes must be positive");
    detail::require<ConfigError>(lr_actor > 0.0 && lr_critic > 0.0, "learning rates must be positive");
    detail::require<ConfigError>(action_l2 >= 0.0, "action_l2 must be >= 0");
  }
};

struct ActorCritic {
  nn::Network actor, critic, actor_target, critic_target;
  nn::AdamState actor_opt, critic_opt;
  Normalizer obs_norm, goal_norm;
  int goal_dims = 3;

  /// Observation, block-minus-gripper offset, goal.
  static constexpr int kObsFeatures = Observation::kSize + 3;

  int feature_size() const { return kObsFeatures + goal_dims; }

  static std::array<double, kObsFeatures> observation_features(const Observation& obs) {
    std::array<double, kObsFeatures> f{};
    const auto base = obs.to_array();
    std::copy(base.begin(), base.end(), f.begin());
    for (int i = 0; i < 3; ++i) f[Observation::kSize + i] = obs.block[i] - obs.gripper[i];
    return f;
  }

  static ActorCritic create(int goal_dims, const NetworkConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ActorCritic ac;
    ac.goal_dims = goal_dims;
    const int features = kObsFeatures + goal_dims;
    ac.actor = nn::init_mlp(features, cfg.hidden, Action::kSize, nn::Activation::tanh, derive_seed(seed, {1}));
    ac.critic = nn::init_mlp(features + Action::kSize, cfg.hidden, 1, nn::Activation::linear, derive_seed(seed, {2}));
    ac.actor_target = ac.actor;
    ac.critic_target = ac.critic;
    ac.actor_opt = nn::make_adam_state(ac.actor);
    ac.critic_opt = nn::make_adam_state(ac.critic);
    ac.obs_norm = Normalizer(kObsFeatures, cfg.norm_min_std, cfg.clip_obs);
    ac.goal_norm = Normalizer(goal_dims, cfg.norm_min_std, cfg.clip_obs);
    return ac;
  }

  /// Goal with masked dimensions replaced by the block coordinates in `obs`.
  static Goal remask(const Goal& goal, const Observation& obs, const GoalMask& mask) {
    Goal g = goal;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!mask[i]) g[i] = obs.block[i];
    return g;
  }

  /// Normalized observation features followed by the normalized goal.
  nn::Vector features(const Observation& obs, std::span<const double> goal) const {
    detail::require<ShapeError>(static_cast<int>(goal.size()) == goal_dims, "goal length mismatch");
    nn::Vector x(feature_size());
    obs_norm.normalize_into(observation_features(obs), x.head(kObsFeatures));
    goal_norm.normalize_into(goal, x.tail(goal_dims));
    return x;
  }

  Action policy(const Observation& obs, std::span<const double> goal) const {
    const nn::Vector a = nn::forward(actor, features(obs, goal));
    return Action::from_span(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())));
  }

  bool operator==(const ActorCritic&) const = default;
};

struct SelectedAction {
  Action action;
  bool uniform_random = false;
};

/// Train mode: uniform random action with probability random_rate, otherwise
/// the actor output plus N(0, sigma) noise, clamped. Eval mode: actor output.
inline SelectedAction select_action(const ActorCritic& ac, const Observation& obs, std::span<const double> goal,
                                    const ExplorationConfig& expl, bool train_mode, Rng& rng) {
  if (!train_mode) return {ac.policy(obs, goal), false};
  if (expl.random_rate > 0.0 && rng.bernoulli(expl.random_rate)) {
    Action a{{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)}, rng.uniform(-1.0, 1.0)};
    return {a, true};
  }
  Action a = ac.policy(obs, goal);
  if (expl.sigma > 0.0) {
    for (double& m : a.move) m += expl.sigma * rng.normal();
    a.grasp += expl.sigma * rng.normal();
  }
  return {a.clamped(), false};
}

struct EpisodeResult {
  EpisodeRecord record;
  Goal goal;                 // unmasked episode goal
  GoalMask mask;
  /// True when every mask-1 dimension was achieved at the final step.
  bool success_under_mask() const {
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i] && !record.terminal_success[i]) return false;
    return true;
  }
};

/// Runs one episode from reset(tag, env_seed). `policy(obs, masked_goal)`
/// returns the action; the masked goal is recomputed from the current
/// achieved goal at every step.
template <typename Policy>
EpisodeResult rollout_with(EnvTag tag, const EnvConfig& env_cfg, std::uint64_t env_seed, const GoalMask& mask,
                           std::int64_t episode_id, Policy&& policy) {
  auto [state, goal] = reset(tag, env_seed, env_cfg);
  detail::require<ShapeError>(mask.size() == goal.size(), "mask length does not match goal dimension");
  EpisodeResult result;
  result.goal = goal;
  result.mask = mask;
  result.record.transitions.reserve(static_cast<std::size_t>(state.horizon));
  while (!state.done()) {
    Transition tr;
    tr.obs = state.obs;
    tr.goal = apply_mask(goal, achieved_goal(state.obs, tag), mask);
    tr.mask = mask;
    tr.action = Action(policy(state.obs, tr.goal)).clamped();
    tr.episode_id = episode_id;
    tr.t = state.t;
    state = step(state, tr.action);
    tr.next_obs = state.obs;
    result.record.transitions.push_back(std::move(tr));
  }
  result.record.terminal_success = subgoal_success(achieved_goal(state.obs, tag), goal, env_cfg.epsilon);
  return result;
}

inline EpisodeResult rollout_episode(EnvTag tag, const EnvConfig& env_cfg, std::uint64_t env_seed,
                                     const ActorCritic& ac, const GoalMask& mask, const ExplorationConfig& expl,
                                     Rng& rng, std::int64_t episode_id = 0) {
  return rollout_with(tag, env_cfg, env_seed, mask, episode_id, [&](const Observation& o, const Goal& g) {
    return select_action(ac, o, g, expl, true, rng).action;
  });
}

struct TrainStats {
  double critic_loss = 0.0;
  double actor_objective = 0.0;  // mean Q(o, g, pi(o, g)) before the update
};

/// Learner inputs for a sampled batch; samples are columns.
struct BatchTensors {
  nn::Matrix x, x_next, actions;
  nn::Vector rewards;
};

inline BatchTensors batch_tensors(const ActorCritic& ac, const std::vector<SampledTransition>& batch,
                                  const NetworkConfig& net_cfg) {
  detail::require<ConfigError>(!batch.empty(), "training batch must be non-empty");
  const auto B = static_cast<Eigen::Index>(batch.size());
  const int F = ac.feature_size();
  const int A = Action::kSize;
  BatchTensors t{nn::Matrix(F, B), nn::Matrix(F, B), nn::Matrix(A, B), nn::Vector(B)};
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto& tr = batch[static_cast<std::size_t>(b)].transition;
    if (net_cfg.remask_goals && !tr.mask.all_ones()) {
      t.x.col(b) = ac.features(tr.obs, ActorCritic::remask(tr.goal, tr.obs, tr.mask));
      t.x_next.col(b) = ac.features(tr.next_obs, ActorCritic::remask(tr.goal, tr.next_obs, tr.mask));
    } else {
      t.x.col(b) = ac.features(tr.obs, tr.goal);
      t.x_next.col(b) = ac.features(tr.next_obs, tr.goal);
    }
    const auto a = tr.action.to_array();
    for (int i = 0; i < A; ++i) t.actions(i, b) = a[static_cast<std::size_t>(i)];
    t.rewards(b) = batch[static_cast<std::size_t>(b)].reward;
  }
  return t;
}

/// y = clip(r + gamma * Q'(x', pi'(x')), -1 / (1 - gamma), 0).
inline nn::Vector critic_targets(const ActorCritic& ac, const BatchTensors& t, double gamma) {
  const auto F = t.x_next.rows();
  const int A = Action::kSize;
  nn::Matrix next_in(F + A, t.x_next.cols());
  next_in.topRows(F) = t.x_next;
  next_in.bottomRows(A) = nn::forward_batch(ac.actor_target, t.x_next);
  const nn::Matrix q_next = nn::forward_batch(ac.critic_target, next_in);
  const double clip_lo = -1.0 / (1.0 - gamma);
  nn::Vector y(t.x_next.cols());
  for (Eigen::Index b = 0; b < y.size(); ++b) y(b) = std::clamp(t.rewards(b) + gamma * q_next(0, b), clip_lo, 0.0);
  return y;
}

struct LossAndGradients {
  double loss = 0.0;
  nn::Gradients grads;
};

/// Mean squared TD error of Q(x, a) against `y`.
inline LossAndGradients critic_loss_gradients(const ActorCritic& ac, const BatchTensors& t, const nn::Vector& y) {
  const auto F = t.x.rows();
  const auto B = t.x.cols();
  nn::Matrix in(F + Action::kSize, B);
  in.topRows(F) = t.x;
  in.bottomRows(Action::kSize) = t.actions;
  const nn::Matrix q = nn::forward_batch(ac.critic, in);
  const nn::Matrix td = q - y.transpose();
  return {td.squaredNorm() / static_cast<double>(B),
          nn::backward_batch(ac.critic, in, (2.0 / static_cast<double>(B)) * td)};
}

/// Actor loss -mean Q(x, pi(x)) + action_l2 * mean(pi^2), the mean of the
/// penalty taken over batch and action components. The gradient reaches the
/// actor through the critic's input gradient; the critic is not changed.
/// `loss` holds the objective mean Q(x, pi(x)).
inline LossAndGradients actor_loss_gradients(const ActorCritic& ac, const nn::Matrix& x, double action_l2) {
  const auto F = x.rows();
  const auto B = x.cols();
  const int A = Action::kSize;
  const nn::Matrix pi = nn::forward_batch(ac.actor, x);
  nn::Matrix in(F + A, B);
  in.topRows(F) = x;
  in.bottomRows(A) = pi;
  nn::Matrix q_pi;
  const nn::Gradients through_critic =
      nn::backward_batch(ac.critic, in, nn::Matrix::Constant(1, B, -1.0 / static_cast<double>(B)), &q_pi);
  nn::Matrix d_pi = through_critic.input.bottomRows(A);
  d_pi += (2.0 * action_l2 / static_cast<double>(B * A)) * pi;
  return {q_pi.mean(), nn::backward_batch(ac.actor, x, d_pi)};
}

/// One optimization step for critic and actor on `batch`, followed by the
/// Polyak update of both target networks. Gradients for both networks are
/// taken at the pre-update parameters.
inline TrainStats train_batch(ActorCritic& ac, const std::vector<SampledTransition>& batch, const RolloutConfig& cfg,
                              const NetworkConfig& net_cfg) {
  const auto t = batch_tensors(ac, batch, net_cfg);
  const auto y = critic_targets(ac, t, cfg.gamma);
  const auto critic = critic_loss_gradients(ac, t, y);
  const auto actor = actor_loss_gradients(ac, t.x, net_cfg.action_l2);
  if (!std::isfinite(critic.loss) || !std::isfinite(actor.loss))
    throw NumericError("non-finite loss in train_batch: critic_loss=" + std::to_string(critic.loss) +
                       " actor_objective=" + std::to_string(actor.loss) +
                       " max|target|=" + std::to_string(y.cwiseAbs().maxCoeff()));
  nn::adam_step(ac.critic, critic.grads, ac.critic_opt, net_cfg.lr_critic);
  nn::adam_step(ac.actor, actor.grads, ac.actor_opt, net_cfg.lr_actor);
  nn::polyak_update(ac.critic_target, ac.critic, cfg.tau);
  nn::polyak_update(ac.actor_target, ac.actor, cfg.tau);
  return {critic.loss, actor.loss};
}

struct EvaluationResult {
  double success_rate = 0.0;
  std::vector<std::vector<bool>> per_dim;  // n_eval rows x goal dims
};

template <typename Policy>
EvaluationResult evaluate_with(EnvTag tag, const EnvConfig& env_cfg, int n_eval, std::uint64_t seed,
                               Policy&& policy) {
  detail::require<ConfigError>(n_eval > 0, "n_eval must be positive");
  EvaluationResult r;
  int successes = 0;
  const auto full = GoalMask::ones(static_cast<std::size_t>(goal_dim(tag)));
  for (int i = 0; i < n_eval; ++i) {
    auto ep = rollout_with(tag, env_cfg, derive_seed(seed, {static_cast<std::uint64_t>(i)}), full, -1 - i, policy);
    if (all_true(ep.record.terminal_success)) ++successes;
    r.per_dim.push_back(ep.record.terminal_success);
  }
  r.success_rate = static_cast<double>(successes) / static_cast<double>(n_eval);
  return r;
}

/// Unmasked goals, deterministic policy; success is judged at the final step.
inline EvaluationResult evaluate(EnvTag tag, const EnvConfig& env_cfg, const ActorCritic& ac, int n_eval,
                                 std::uint64_t seed) {
  return evaluate_with(tag, env_cfg, n_eval, seed,
                       [&](const Observation& o, const Goal& g) { return ac.policy(o, g); });
}

// ---------------------------------------------------------------------------
// Epoch loop.
// ---------------------------------------------------------------------------

struct TrainerConfig {
  EnvTag env = EnvTag::lift_world;
  EnvConfig env_cfg;
  RolloutConfig rollout;
  ExplorationConfig exploration;
  NetworkConfig network;
  HerConfig her;               // k = 0 disables hindsight relabeling
  bool cgm = true;
  CurriculumConfig curriculum;
  int n_eval = 10;
  int tracker_window = 10;
  std::size_t buffer_capacity = 1'000'000;
  std::uint64_t seed = 0;

  void validate() const {
    env_cfg.validate();
    rollout.validate();
    exploration.validate();
    network.validate();
    her.validate();
    curriculum.validate();
    detail::require<ConfigError>(n_eval > 0, "n_eval must be positive");
    detail::require<ConfigError>(tracker_window > 0, "tracker window must be positive");
    detail::require<ConfigError>(buffer_capacity >= static_cast<std::size_t>(rollout.horizon),
                                 "buffer must hold at least one episode");
    detail::require<ConfigError>(rollout.horizon == env_cfg.horizon, "rollout and environment horizons differ");
  }
};

struct EpochStats {
  int epoch = 0;
  double success_rate = 0.0;
  std::vector<double> dim_rates;         // tracker rates after this epoch's evaluation
  std::vector<GoalMask> masks;
  std::vector<double> estimated;         // c_m per mask, after the tracker update
  std::vector<double> training_success;  // per mask, NaN when the mask was not sampled
  std::vector<int> histogram;            // sampled-mask counts over this epoch's rollouts
  double critic_loss = 0.0;              // means over the epoch's optimization steps
  double actor_objective = 0.0;
  std::size_t transitions_added = 0;
};

namespace stream {
enum : std::uint64_t { worker = 11, batch = 12, eval = 13, init = 14 };
}

class Trainer {
 public:
  explicit Trainer(TrainerConfig cfg)
      : cfg_((cfg.validate(), std::move(cfg))),
        ac_(ActorCritic::create(goal_dim(cfg_.env), cfg_.network, derive_seed(cfg_.seed, {stream::init}))),
        buffer_(cfg_.buffer_capacity, GoalSpace{cfg_.env, cfg_.env_cfg.epsilon}),
        tracker_(goal_dim(cfg_.env), cfg_.tracker_window),
        masks_(enumerate_masks(goal_dim(cfg_.env), cfg_.curriculum.include_zero_mask)) {
    refresh_weights();
  }

  const TrainerConfig& config() const { return cfg_; }
  const ActorCritic& learner() const { return ac_; }
  ActorCritic& mutable_learner() { return ac_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const SuccessTracker& tracker() const { return tracker_; }
  const std::vector<GoalMask>& masks() const { return masks_; }
  const std::vector<double>& weights() const { return weights_; }
  int epoch() const { return epoch_; }

  /// Index of the all-ones mask in masks().
  std::size_t full_mask_index() const { return masks_.size() - 1; }

  EvaluationResult evaluate_current(int epoch) const {
    return evaluate(cfg_.env, cfg_.env_cfg, ac_, cfg_.n_eval,
                    derive_seed(cfg_.seed, {stream::eval, static_cast<std::uint64_t>(epoch)}));
  }

  EpochStats run_epoch() {
    const auto& rc = cfg_.rollout;
    const std::size_t nm = masks_.size();
    EpochStats stats;
    stats.epoch = epoch_;
    stats.masks = masks_;
    stats.histogram.assign(nm, 0);
    std::vector<int> mask_success(nm, 0);

    std::vector<Rng> worker_rngs;
    for (int w = 0; w < rc.n_parallel; ++w)
      worker_rngs.emplace_back(
          derive_seed(cfg_.seed, {stream::worker, static_cast<std::uint64_t>(w), static_cast<std::uint64_t>(epoch_)}));
    const std::vector<double> frozen_weights = weights_;

    double loss_sum = 0.0, objective_sum = 0.0;
    int train_steps = 0;
    for (int cycle = 0; cycle < rc.n_cycles; ++cycle) {
      std::vector<EpisodeResult> results(static_cast<std::size_t>(rc.n_parallel));
      std::vector<std::size_t> chosen(static_cast<std::size_t>(rc.n_parallel));
      auto work = [&](int w) {
        Rng& rng = worker_rngs[static_cast<std::size_t>(w)];
        const std::size_t mi = cfg_.cgm ? sample_index(frozen_weights, rng) : full_mask_index();
        const std::uint64_t env_seed = rng.next_u64();
        chosen[static_cast<std::size_t>(w)] = mi;
        results[static_cast<std::size_t>(w)] =
            rollout_episode(cfg_.env, cfg_.env_cfg, env_seed, ac_, masks_[mi], cfg_.exploration, rng,
                            next_episode_id_ + w);
      };
      run_workers(work);
      next_episode_id_ += rc.n_parallel;

      // Ingest in worker order.
      for (int w = 0; w < rc.n_parallel; ++w) {
        auto& res = results[static_cast<std::size_t>(w)];
        const std::size_t mi = chosen[static_cast<std::size_t>(w)];
        stats.histogram[mi] += 1;
        if (res.success_under_mask()) mask_success[mi] += 1;
        stats.transitions_added += res.record.size();
        feed_normalizers(res.record);
        buffer_.store_episode(std::move(res.record));
      }
      ac_.obs_norm.recompute();
      ac_.goal_norm.recompute();

      Rng batch_rng(derive_seed(cfg_.seed, {stream::batch, static_cast<std::uint64_t>(epoch_),
                                            static_cast<std::uint64_t>(cycle)}));
      for (int s = 0; s < rc.opt_steps; ++s) {
        const auto batch = buffer_.sample_batch(static_cast<std::size_t>(rc.batch_size), cfg_.her, batch_rng);
        const auto ts = train_batch(ac_, batch, rc, cfg_.network);
        loss_sum += ts.critic_loss;
        objective_sum += ts.actor_objective;
        ++train_steps;
      }
    }

    const auto eval = evaluate_current(epoch_);
    for (const auto& row : eval.per_dim) tracker_.record(row);
    refresh_weights();

    stats.success_rate = eval.success_rate;
    stats.dim_rates = tracker_.rates();
    for (std::size_t i = 0; i < nm; ++i) {
      stats.estimated.push_back(estimate_mask_success(stats.dim_rates, masks_[i]));
      stats.training_success.push_back(stats.histogram[i] > 0 ? static_cast<double>(mask_success[i]) /
                                                                    static_cast<double>(stats.histogram[i])
                                                              : std::numeric_limits<double>::quiet_NaN());
    }
    if (train_steps > 0) {
      stats.critic_loss = loss_sum / train_steps;
      stats.actor_objective = objective_sum / train_steps;
    }
    ++epoch_;
    return stats;
  }

  void save_checkpoint(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    auto write = [&](const char* name, auto&& fn) {
      std::ofstream out(dir / name, std::ios::binary);
      if (!out) throw InputError("cannot write " + (dir / name).string());
      fn(out);
    };
    write("actor.bin", [&](std::ostream& o) { nn::save_network(o, ac_.actor); });
    write("critic.bin", [&](std::ostream& o) { nn::save_network(o, ac_.critic); });
    write("actor_target.bin", [&](std::ostream& o) { nn::save_network(o, ac_.actor_target); });
    write("critic_target.bin", [&](std::ostream& o) { nn::save_network(o, ac_.critic_target); });
    write("actor_adam.bin", [&](std::ostream& o) { nn::save_adam(o, ac_.actor_opt); });
    write("critic_adam.bin", [&](std::ostream& o) { nn::save_adam(o, ac_.critic_opt); });
    write("obs_norm.txt", [&](std::ostream& o) { ac_.obs_norm.save(o); });
    write("goal_norm.txt", [&](std::ostream& o) { ac_.goal_norm.save(o); });
  }

 private:
  template <typename Work>
  void run_workers(Work& work) {
    const int n = cfg_.rollout.n_parallel;
    const int threads = std::min(cfg_.rollout.workers, n);
    if (threads <= 1) {
      for (int w = 0; w < n; ++w) work(w);
      return;
    }
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (int w = t; w < n; w += threads) work(w);
      });
  }

  void feed_normalizers(const EpisodeRecord& rec) {
    for (const auto& tr : rec.transitions) {
      ac_.obs_norm.add(ActorCritic::observation_features(tr.obs));
      ac_.goal_norm.add(tr.goal);
      ac_.goal_norm.add(achieved_goal(tr.next_obs, cfg_.env));
    }
  }

  void refresh_weights() {
    if (cfg_.cgm) {
      weights_ = mask_weights(tracker_, masks_, cfg_.curriculum);
    } else {
      weights_.assign(masks_.size(), 0.0);
      weights_[full_mask_index()] = 1.0;
    }
  }

  TrainerConfig cfg_;
  ActorCritic ac_;
  ReplayBuffer buffer_;
  SuccessTracker tracker_;
  std::vector<GoalMask> masks_;
  std::vector<double> weights_;
  int epoch_ = 0;
  std::int64_t next_episode_id_ = 0;
};

inline ActorCritic load_checkpoint(const std::filesystem::path& dir, int goal_dims) {
  auto open = [&](const char* name) {
    std::ifstream in(dir / name, std::ios::binary);
    if (!in) throw InputError("missing checkpoint file " + (dir / name).string());
    return in;
  };
  ActorCritic ac;
  ac.goal_dims = goal_dims;
  {
    auto in = open("actor.bin");
    ac.actor = nn::load_network(in);
  }
  {
    auto in = open("critic.bin");
    ac.critic = nn::load_network(in);
  }
  {
    auto in = open("actor_target.bin");
    ac.actor_target = nn::load_network(in);
  }
  {
    auto in = open("critic_target.bin");
    ac.critic_target = nn::load_network(in);
  }
  {
    auto in = open("actor_adam.bin");
    ac.actor_opt = nn::load_adam(in, ac.actor);
  }
  {
    auto in = open("critic_adam.bin");
    ac.critic_opt = nn::load_adam(in, ac.critic);
  }
  {
    auto in = open("obs_norm.txt");
    ac.obs_norm = Normalizer::load(in);
  }
  {
    auto in = open("goal_norm.txt");
    ac.goal_norm = Normalizer::load(in);
  }
  return ac;
}

}  // namespace cgm
