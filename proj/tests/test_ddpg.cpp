#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "cgm/ddpg.hpp"

using namespace cgm;

namespace {

NetworkConfig small_net() {
  NetworkConfig c;
  c.hidden = {8, 8};
  return c;
}

ActorCritic small_learner(int goal_dims = 3, std::uint64_t seed = 1) {
  return ActorCritic::create(goal_dims, small_net(), seed);
}

TrainerConfig tiny_trainer(bool cgm_on, std::uint64_t seed = 3) {
  TrainerConfig c;
  c.env = EnvTag::lift_world;
  c.rollout.n_cycles = 2;
  c.rollout.n_parallel = 2;
  c.rollout.opt_steps = 2;
  c.rollout.batch_size = 16;
  c.network = small_net();
  c.cgm = cgm_on;
  c.n_eval = 4;
  c.seed = seed;
  return c;
}

std::vector<SampledTransition> random_batch(const ActorCritic& ac, int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SampledTransition> batch;
  for (int i = 0; i < n; ++i) {
    auto [s, g] = reset(EnvTag::lift_world, rng.next_u64());
    SampledTransition st;
    st.transition.obs = s.obs;
    st.transition.goal = g;
    st.transition.mask = GoalMask::ones(3);
    st.transition.action = Action{{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)}, rng.uniform(-1, 1)};
    st.transition.next_obs = step(s, st.transition.action).obs;
    st.reward = rng.bernoulli(0.3) ? 0.0 : -1.0;
    batch.push_back(st);
  }
  (void)ac;
  return batch;
}

}  // namespace

TEST(Normalizer, MeanStdAndClip) {
  Normalizer n(2, 1e-2, 5.0);
  n.add(std::vector<double>{1.0, 10.0});
  n.add(std::vector<double>{3.0, 10.0});
  // Stats only move on recompute().
  EXPECT_EQ(n.mean()(0), 0.0);
  n.recompute();
  EXPECT_DOUBLE_EQ(n.mean()(0), 2.0);
  EXPECT_DOUBLE_EQ(n.stddev()(0), 1.0);
  EXPECT_DOUBLE_EQ(n.stddev()(1), 1e-2);  // floored
  nn::Vector out(2);
  n.normalize_into(std::vector<double>{4.0, 11.0}, out);
  EXPECT_DOUBLE_EQ(out(0), 2.0);
  EXPECT_DOUBLE_EQ(out(1), 5.0);  // (11 - 10) / 0.01 = 100, clipped
  EXPECT_THROW(n.add(std::vector<double>{1.0}), ShapeError);
}

TEST(Normalizer, SaveLoadRoundTrip) {
  Normalizer n(3);
  n.add(std::vector<double>{0.1, 0.2, 0.3});
  n.add(std::vector<double>{0.4, -0.2, 1.3});
  n.recompute();
  std::stringstream ss;
  n.save(ss);
  const auto back = Normalizer::load(ss);
  EXPECT_TRUE(back == n);
  EXPECT_TRUE(back.mean().isApprox(n.mean()));
}

TEST(ActorCritic, ArchitectureAndTargets) {
  const auto ac = small_learner();
  EXPECT_EQ(ac.actor.input_size(), ActorCritic::kObsFeatures + 3);
  EXPECT_EQ(ac.actor.output_size(), Action::kSize);
  EXPECT_EQ(ac.critic.input_size(), ActorCritic::kObsFeatures + 3 + Action::kSize);
  EXPECT_EQ(ac.critic.output_size(), 1);
  EXPECT_TRUE(ac.actor_target == ac.actor);
  EXPECT_TRUE(ac.critic_target == ac.critic);
  EXPECT_EQ(ac.actor.layers().back().activation, nn::Activation::tanh);
}

TEST(ActorCritic, RemaskReplacesMaskedDims) {
  Observation o;
  o.block = {0.1, 0.2, 0.3};
  EXPECT_EQ(ActorCritic::remask({0.9, 0.8, 0.7}, o, GoalMask::from_string("101")), (Goal{0.9, 0.2, 0.7}));
}

TEST(SelectAction, EvalModeDeterministicAndBounded) {
  const auto ac = small_learner();
  auto [s, g] = reset(EnvTag::lift_world, 2);
  Rng r1(1), r2(2);
  const auto a = select_action(ac, s.obs, g, ExplorationConfig{}, false, r1);
  const auto b = select_action(ac, s.obs, g, ExplorationConfig{}, false, r2);
  EXPECT_EQ(a.action, b.action);
  EXPECT_FALSE(a.uniform_random);
  for (double v : a.action.to_array()) {
    EXPECT_LE(std::abs(v), 1.0);
  }
}

TEST(SelectAction, NoiseFreeTrainModeEqualsEval) {
  const auto ac = small_learner();
  auto [s, g] = reset(EnvTag::lift_world, 2);
  Rng rng(1);
  const ExplorationConfig quiet{0.0, 0.0};
  EXPECT_EQ(select_action(ac, s.obs, g, quiet, true, rng).action, ac.policy(s.obs, g));
}

TEST(SelectAction, RandomActionRate) {
  const auto ac = small_learner();
  auto [s, g] = reset(EnvTag::lift_world, 2);
  Rng rng(5);
  int random = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto sel = select_action(ac, s.obs, g, ExplorationConfig{}, true, rng);
    random += sel.uniform_random;
    for (double v : sel.action.to_array()) ASSERT_LE(std::abs(v), 1.0);
  }
  EXPECT_NEAR(random / static_cast<double>(n), 0.3, 0.01);
}

TEST(SelectAction, GaussianNoiseScale) {
  // Zero actor output region is not guaranteed, so compare with the
  // unclamped mean action on an input where it is well inside (-1, 1).
  const auto ac = small_learner();
  auto [s, g] = reset(EnvTag::lift_world, 2);
  const auto mean = ac.policy(s.obs, g);
  Rng rng(6);
  const ExplorationConfig expl{0.05, 0.0};
  double sumsq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const auto a = select_action(ac, s.obs, g, expl, true, rng).action;
    sumsq += (a.move[0] - mean.move[0]) * (a.move[0] - mean.move[0]);
  }
  ASSERT_LT(std::abs(mean.move[0]), 0.8);
  EXPECT_NEAR(std::sqrt(sumsq / n), 0.05, 0.002);
}

TEST(Rollout, LengthGoalsAndMask) {
  const auto ac = small_learner();
  Rng rng(3);
  const auto mask = GoalMask::from_string("110");
  const auto res = rollout_episode(EnvTag::lift_world, EnvConfig{}, 17, ac, mask, ExplorationConfig{}, rng, 5);
  ASSERT_EQ(res.record.size(), 50u);
  for (std::size_t t = 0; t < res.record.size(); ++t) {
    const auto& tr = res.record.transitions[t];
    EXPECT_EQ(tr.t, static_cast<int>(t));
    EXPECT_EQ(tr.mask, mask);
    EXPECT_EQ(tr.episode_id, 5);
    EXPECT_EQ(tr.goal, apply_mask(res.goal, achieved_goal(tr.obs, EnvTag::lift_world), mask));
  }
}

TEST(Rollout, ZeroMaskIsTriviallyAchieved) {
  const auto ac = small_learner();
  Rng rng(3);
  const auto res =
      rollout_episode(EnvTag::lift_world, EnvConfig{}, 17, ac, GoalMask::zeros(3), ExplorationConfig{}, rng);
  EXPECT_EQ(recompute_reward(res.record.transitions.front(), GoalSpace{EnvTag::lift_world, 0.05}), 0.0);
  EXPECT_TRUE(res.success_under_mask());
}

TEST(Rollout, ScriptedPolicySucceedsUnderFullMask) {
  const EnvConfig c;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto res = rollout_with(EnvTag::lift_world, c, seed, GoalMask::ones(3), 0,
                                  [&](const Observation& o, const Goal& g) { return scripted_lift_action(o, g, c); });
    EXPECT_TRUE(all_true(res.record.terminal_success)) << seed;
  }
}

TEST(Evaluate, ShapesAndScriptedOracle) {
  const EnvConfig c;
  const auto scripted = evaluate_with(EnvTag::lift_world, c, 10, 4,
                                      [&](const Observation& o, const Goal& g) { return scripted_lift_action(o, g, c); });
  EXPECT_EQ(scripted.success_rate, 1.0);
  ASSERT_EQ(scripted.per_dim.size(), 10u);
  EXPECT_EQ(scripted.per_dim.front().size(), 3u);
  const auto untrained = evaluate(EnvTag::lift_world, c, small_learner(), 20, 4);
  EXPECT_LE(untrained.success_rate, 0.1);
  EXPECT_THROW(evaluate(EnvTag::lift_world, c, small_learner(), 0, 4), ConfigError);
}

TEST(Evaluate, DoesNotMutateLearner) {
  const auto ac = small_learner();
  const auto copy = ac;
  evaluate(EnvTag::lift_world, EnvConfig{}, ac, 5, 1);
  EXPECT_TRUE(ac == copy);
}

TEST(CriticTargets, ZeroRewardsAndZeroCritic) {
  auto ac = small_learner();
  auto& last = ac.critic_target.mutable_layers().back();
  last.weight.setZero();
  last.bias.setZero();
  auto batch = random_batch(ac, 16, 1);
  for (auto& s : batch) s.reward = 0.0;
  const auto t = batch_tensors(ac, batch, small_net());
  EXPECT_TRUE(critic_targets(ac, t, 0.98).isZero(0.0));
}

TEST(CriticTargets, ClippedAtLowerBound) {
  auto ac = small_learner();
  auto& last = ac.critic_target.mutable_layers().back();
  last.weight.setZero();
  last.bias.setConstant(-50.0);
  auto batch = random_batch(ac, 8, 2);
  for (auto& s : batch) s.reward = -1.0;
  const auto y = critic_targets(ac, batch_tensors(ac, batch, small_net()), 0.98);
  for (Eigen::Index i = 0; i < y.size(); ++i) EXPECT_DOUBLE_EQ(y(i), -1.0 / (1.0 - 0.98));
  last.bias.setConstant(5.0);
  for (auto& s : batch) s.reward = 0.0;
  EXPECT_TRUE(critic_targets(ac, batch_tensors(ac, batch, small_net()), 0.98).isZero(0.0));
}

TEST(ActorGradient, MatchesFiniteDifferencesThroughFrozenCritic) {
  const auto ac = small_learner(3, 9);
  const auto t = batch_tensors(ac, random_batch(ac, 6, 3), small_net());
  const double l2 = 0.7;
  const auto analytic = actor_loss_gradients(ac, t.x, l2);
  auto loss = [&](const nn::Network& actor) {
    const nn::Matrix pi = nn::forward_batch(actor, t.x);
    nn::Matrix in(t.x.rows() + pi.rows(), t.x.cols());
    in.topRows(t.x.rows()) = t.x;
    in.bottomRows(pi.rows()) = pi;
    return -nn::forward_batch(ac.critic, in).mean() + l2 * pi.array().square().mean();
  };
  auto actor = ac.actor;
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t l = 0; l < actor.num_layers(); ++l) {
    auto& w = actor.mutable_layers()[l].weight;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double keep = w.data()[i];
      w.data()[i] = keep + h;
      const double up = loss(actor);
      w.data()[i] = keep - h;
      const double down = loss(actor);
      w.data()[i] = keep;
      const double fd = (up - down) / (2 * h);
      const double an = analytic.grads.params.weights[l].data()[i];
      worst = std::max(worst, std::abs(fd - an) / std::max(1e-6, std::abs(fd) + std::abs(an)));
    }
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(TrainBatch, UpdatesNetworksAndTargets) {
  auto ac = small_learner();
  const auto before = ac;
  RolloutConfig rc;
  rc.tau = 0.05;
  const auto stats = train_batch(ac, random_batch(ac, 32, 4), rc, small_net());
  EXPECT_TRUE(std::isfinite(stats.critic_loss));
  EXPECT_FALSE(ac.actor == before.actor);
  EXPECT_FALSE(ac.critic == before.critic);
  EXPECT_EQ(ac.actor_opt.step, 1);
  // target = 0.95 * old target + 0.05 * new main
  const nn::Matrix expect =
      0.95 * before.critic_target.layers()[0].weight + 0.05 * ac.critic.layers()[0].weight;
  EXPECT_TRUE(ac.critic_target.layers()[0].weight.isApprox(expect, 1e-14));
}

TEST(TrainBatch, TauOneCopiesMainIntoTargets) {
  auto ac = small_learner();
  RolloutConfig rc;
  rc.tau = 1.0;
  train_batch(ac, random_batch(ac, 8, 5), rc, small_net());
  EXPECT_TRUE(ac.actor_target == ac.actor);
  EXPECT_TRUE(ac.critic_target == ac.critic);
}

TEST(TrainBatch, CriticFitsConstantTarget) {
  // All rewards -1, targets zeroed: the critic should approach
  // y = clip(-1 + gamma * Q', ...) with Q' the (slowly moving) target.
  auto ac = small_learner();
  auto batch = random_batch(ac, 64, 6);
  for (auto& s : batch) s.reward = -1.0;
  RolloutConfig rc;
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 300; ++i) {
    const auto st = train_batch(ac, batch, rc, small_net());
    if (i == 0) first = st.critic_loss;
    last = st.critic_loss;
  }
  EXPECT_LT(last, first);
}

TEST(TrainBatch, NonFiniteRaisesNumericError) {
  auto ac = small_learner();
  auto batch = random_batch(ac, 4, 7);
  batch[0].reward = std::nan("");
  EXPECT_THROW(train_batch(ac, batch, RolloutConfig{}, small_net()), NumericError);
  EXPECT_THROW(train_batch(ac, {}, RolloutConfig{}, small_net()), ConfigError);
}

TEST(Trainer, EpochBookkeeping) {
  Trainer t(tiny_trainer(true));
  const auto s = t.run_epoch();
  const auto& rc = t.config().rollout;
  EXPECT_EQ(s.transitions_added, static_cast<std::size_t>(rc.n_cycles * rc.n_parallel * rc.horizon));
  int total = 0;
  for (int h : s.histogram) total += h;
  EXPECT_EQ(total, rc.n_cycles * rc.n_parallel);
  EXPECT_EQ(t.tracker().count(0), static_cast<std::size_t>(t.config().n_eval));
  EXPECT_EQ(s.masks.size(), 7u);
  for (double r : s.dim_rates) {
    EXPECT_GE(r, 0.0);
    EXPECT_LE(r, 1.0);
  }
  for (std::size_t i = 0; i < s.masks.size(); ++i) EXPECT_EQ(std::isnan(s.training_success[i]), s.histogram[i] == 0);
  t.run_epoch();
  EXPECT_EQ(t.tracker().count(0), 8u);  // window 10 holds both epochs of 4
}

TEST(Trainer, BaselineUsesOnlyFullMask) {
  Trainer t(tiny_trainer(false));
  const auto s = t.run_epoch();
  for (std::size_t i = 0; i + 1 < s.histogram.size(); ++i) EXPECT_EQ(s.histogram[i], 0);
  EXPECT_EQ(s.histogram.back(), 4);
}

TEST(Trainer, DeterministicPerSeed) {
  Trainer a(tiny_trainer(true, 5)), b(tiny_trainer(true, 5));
  for (int e = 0; e < 2; ++e) {
    const auto x = a.run_epoch();
    const auto y = b.run_epoch();
    EXPECT_EQ(x.histogram, y.histogram);
    EXPECT_EQ(x.critic_loss, y.critic_loss);
  }
  EXPECT_TRUE(a.learner() == b.learner());
}

TEST(Trainer, ThreadedWorkersMatchSingleWorker) {
  auto cfg = tiny_trainer(true, 6);
  Trainer a(cfg);
  cfg.rollout.workers = 2;
  Trainer b(cfg);
  a.run_epoch();
  b.run_epoch();
  EXPECT_TRUE(a.learner() == b.learner());
}

TEST(Trainer, InvalidConfigRejected) {
  auto cfg = tiny_trainer(true);
  cfg.rollout.horizon = 10;
  EXPECT_THROW(Trainer{cfg}, ConfigError);
  cfg = tiny_trainer(true);
  cfg.exploration.random_rate = 1.5;
  EXPECT_THROW(Trainer{cfg}, ConfigError);
}

TEST(Trainer, CheckpointRoundTrip) {
  Trainer t(tiny_trainer(true, 8));
  t.run_epoch();
  const auto dir = std::filesystem::temp_directory_path() / "cgm_ckpt_test";
  std::filesystem::remove_all(dir);
  t.save_checkpoint(dir);
  const auto back = load_checkpoint(dir, 3);
  EXPECT_TRUE(back == t.learner());
  std::filesystem::remove(dir / "critic.bin");
  EXPECT_THROW(load_checkpoint(dir, 3), InputError);
  std::filesystem::remove_all(dir);
}
