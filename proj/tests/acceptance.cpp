// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.
//
//   cgm_acceptance --properties            criteria 1-6 (seconds)
//   cgm_acceptance --learning --out DIR    criteria 7-9 (tens of minutes)

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "cgm/cgm.hpp"

using namespace cgm;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

void report(int id, const std::string& name, double limit_s, const std::function<Outcome()>& check) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (limit_s > 0 && secs > limit_s) {
    o.pass = false;
    o.detail += " (over time limit)";
  }
  if (!o.pass) ++g_failures;
  std::printf("%s %d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

// ---------------------------------------------------------------------------
// 1-6
// ---------------------------------------------------------------------------

Outcome mask_suite() {
  const Goal g{0.1, -0.4, 0.7};
  const Goal a{0.3, 0.2, -0.5};
  if (apply_mask(g, a, GoalMask::ones(3)) != g) return {false, "identity mask changed the goal"};
  if (apply_mask(g, a, GoalMask::zeros(3)) != a) return {false, "zero mask did not return achieved"};
  Rng rng(1);
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = 2 + trial % 2;
    Goal gg(n), aa(n);
    std::vector<std::uint8_t> bits(n);
    for (int i = 0; i < n; ++i) {
      gg[i] = rng.uniform(-1, 1);
      aa[i] = rng.uniform(-1, 1);
      bits[i] = rng.bernoulli(0.5);
    }
    const GoalMask m(bits);
    const auto gm = apply_mask(gg, aa, m);
    if (apply_mask(gm, aa, m) != gm) return {false, "not idempotent"};
    const auto ok = subgoal_success(aa, gm, 0.05);
    for (int i = 0; i < n; ++i) {
      if (gm[i] != (m[i] ? gg[i] : aa[i])) return {false, "wrong component"};
      if (!m[i] && !ok[i]) return {false, "masked dimension not satisfied"};
    }
  }
  return {true, "exact on 10000 random triples"};
}

Outcome estimator_oracle() {
  const std::vector<double> p{0.8, 0.5, 0.1};
  const int window = 200;
  SuccessTracker tracker(3, window);
  const auto masks = enumerate_masks(3, false);
  std::vector<int> joint(masks.size(), 0);
  Rng rng(2);
  for (int i = 0; i < window; ++i) {
    const std::vector<bool> s{rng.bernoulli(p[0]), rng.bernoulli(p[1]), rng.bernoulli(p[2])};
    tracker.record(s);
    for (std::size_t m = 0; m < masks.size(); ++m) {
      bool all = true;
      for (int d = 0; d < 3; ++d)
        if (masks[m][d] && !s[d]) all = false;
      joint[m] += all;
    }
  }
  double worst = 0.0;
  for (std::size_t m = 0; m < masks.size(); ++m)
    worst = std::max(worst, std::abs(estimate_mask_success(tracker, masks[m]) - joint[m] / double(window)));
  return {worst <= 0.05, fmt("max deviation %.4f over 7 masks (limit 0.05)", worst)};
}

Outcome sampler_distribution() {
  const std::vector<double> rates{0.9, 0.6, 0.2};
  const auto masks = enumerate_masks(3, false);
  double worst = 0.0;
  Rng rng(3);
  for (double cg : {0.1, 0.4})
    for (double kappa : {1.0, 4.0, 32.0}) {
      // Analytic proximity-form distribution.
      std::vector<double> expect;
      double total = 0.0;
      for (const auto& m : masks) {
        double c = 1.0;
        for (int d = 0; d < 3; ++d)
          if (m[d]) c *= rates[d];
        expect.push_back(std::pow(1.0 - std::abs(c - cg), kappa));
        total += expect.back();
      }
      CurriculumConfig cfg;
      cfg.target_success = cg;
      cfg.sharpness = kappa;
      const auto w = mask_weights(rates, masks, cfg);
      std::vector<int> counts(masks.size(), 0);
      const int n = 100000;
      for (int i = 0; i < n; ++i) counts[sample_index(w, rng)]++;
      double l1 = 0.0;
      for (std::size_t i = 0; i < masks.size(); ++i) l1 += std::abs(counts[i] / double(n) - expect[i] / total);
      worst = std::max(worst, l1);
    }
  return {worst < 0.02, fmt("worst L1 %.4f over 6 (c_g, kappa) settings (limit 0.02)", worst)};
}

Outcome her_ratio() {
  const GoalSpace space{EnvTag::lift_world, 0.05};
  ReplayBuffer buf(100000, space);
  Rng rng(4);
  for (int e = 0; e < 20; ++e) {
    auto [s, g] = reset(EnvTag::lift_world, rng.next_u64());
    EpisodeRecord ep;
    for (int t = 0; t < 50; ++t) {
      Transition tr;
      tr.obs = s.obs;
      tr.goal = g;
      tr.mask = GoalMask::ones(3);
      tr.episode_id = e;
      tr.t = t;
      tr.action = Action{{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)}, rng.uniform(-1, 1)};
      s = step(s, tr.action);
      tr.next_obs = s.obs;
      ep.transitions.push_back(tr);
    }
    ep.terminal_success = {false, false, false};
    buf.store_episode(ep);
  }
  const auto batch = buf.sample_batch(100000, HerConfig{6}, rng);
  double relabeled = 0;
  for (const auto& b : batch) relabeled += b.relabeled;
  const double frac = relabeled / 1e5;
  return {std::abs(frac - 6.0 / 7.0) <= 0.01, fmt("modified fraction %.4f, expected %.4f +- 0.01", frac, 6.0 / 7.0)};
}

double rel_error(double a, double b) { return std::abs(a - b) / std::max(1e-6, std::abs(a) + std::abs(b)); }

nn::Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Rng rng(seed);
  nn::Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1, 1);
  return m;
}

// Worst central-difference error over every weight and bias of `net`.
double worst_fd(nn::Network net, const std::function<double(const nn::Network&)>& loss, const nn::ParameterSet& analytic) {
  const double h = 1e-6;
  double worst = 0.0;
  auto probe = [&](double& slot, double an) {
    const double keep = slot;
    slot = keep + h;
    const double up = loss(net);
    slot = keep - h;
    const double down = loss(net);
    slot = keep;
    worst = std::max(worst, rel_error((up - down) / (2 * h), an));
  };
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    auto& layer = net.mutable_layers()[l];
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) probe(layer.weight.data()[i], analytic.weights[l].data()[i]);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) probe(layer.bias(i), analytic.biases[l](i));
  }
  return worst;
}

Outcome gradient_checks() {
  double core = 0.0;
  std::uint64_t seed = 10;
  for (auto act : {nn::Activation::relu, nn::Activation::tanh, nn::Activation::linear}) {
    const auto net = nn::init_network({4, 7, 5, 3}, {act, act, nn::Activation::tanh}, ++seed);
    const nn::Matrix x = random_matrix(4, 6, ++seed);
    const nn::Matrix up = random_matrix(3, 6, ++seed);
    auto loss = [&](const nn::Network& n) { return (nn::forward_batch(n, x).array() * up.array()).sum(); };
    const auto g = nn::backward_batch(net, x, up);
    core = std::max(core, worst_fd(net, loss, g.params));
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      nn::Matrix xp = x, xm = x;
      xp.data()[i] += h;
      xm.data()[i] -= h;
      const double fd = ((nn::forward_batch(net, xp).array() - nn::forward_batch(net, xm).array()) * up.array()).sum() /
                        (2 * h);
      core = std::max(core, rel_error(fd, g.input.data()[i]));
    }
  }

  NetworkConfig small;
  small.hidden = {8, 8};
  const auto ac = ActorCritic::create(3, small, 9);
  Rng rng(5);
  std::vector<SampledTransition> batch;
  for (int i = 0; i < 6; ++i) {
    auto [s, g] = reset(EnvTag::lift_world, rng.next_u64());
    SampledTransition st;
    st.transition.obs = s.obs;
    st.transition.goal = g;
    st.transition.mask = GoalMask::ones(3);
    st.transition.action = Action{{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)}, rng.uniform(-1, 1)};
    st.transition.next_obs = step(s, st.transition.action).obs;
    st.reward = -1.0;
    batch.push_back(st);
  }
  const auto t = batch_tensors(ac, batch, small);
  const double l2 = 1.0;
  const auto analytic = actor_loss_gradients(ac, t.x, l2);
  auto actor_loss = [&](const nn::Network& actor) {
    const nn::Matrix pi = nn::forward_batch(actor, t.x);
    nn::Matrix in(t.x.rows() + pi.rows(), t.x.cols());
    in.topRows(t.x.rows()) = t.x;
    in.bottomRows(pi.rows()) = pi;
    return -nn::forward_batch(ac.critic, in).mean() + l2 * pi.array().square().mean();
  };
  const double composite = worst_fd(ac.actor, actor_loss, analytic.grads.params);
  const bool pass = core < 1e-4 && composite < 1e-3;
  return {pass, fmt("nn-core worst rel. error %.2e (limit 1e-4), actor-through-critic %.2e (limit 1e-3)", core, composite)};
}

Outcome exploration_ratio() {
  NetworkConfig small;
  small.hidden = {8, 8};
  const auto ac = ActorCritic::create(3, small, 1);
  auto [s, g] = reset(EnvTag::lift_world, 6);
  Rng rng(7);
  int random = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) random += select_action(ac, s.obs, g, ExplorationConfig{}, true, rng).uniform_random;
  const double frac = random / double(n);
  return {std::abs(frac - 0.3) <= 0.01, fmt("uniform-random fraction %.4f, expected 0.30 +- 0.01", frac)};
}

// ---------------------------------------------------------------------------
// 7-9
// ---------------------------------------------------------------------------

struct Variant {
  std::string name;
  Algorithm algorithm;
  bool cgm;
};

const std::vector<Variant> kVariants{
    {"ddpg", Algorithm::ddpg, false},
    {"ddpg+her", Algorithm::ddpg_her, false},
    {"ddpg+her+cgm", Algorithm::ddpg_her, true},
};

RunConfig learning_config(const Variant& v, std::uint64_t seed, int budget) {
  RunConfig c;
  c.algorithm = v.algorithm;
  c.trainer.env = EnvTag::lift_world;
  c.trainer.cgm = v.cgm;
  c.trainer.curriculum.target_success = 0.1;
  c.trainer.curriculum.sharpness = 32;
  c.trainer.seed = seed;
  c.trainer.rollout.workers = 1;
  // Desk scale: 10 cycles of 4 rollouts per epoch instead of 64.
  c.trainer.rollout.n_cycles = 10;
  c.epochs = budget;
  c.stop_after_crossing = 30;
  return c;
}

struct LearningRun {
  std::size_t variant;
  std::uint64_t seed;
  fs::path dir;
  std::optional<int> crossing;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<LearningRun> run_all(const fs::path& root, int seeds, int budget) {
  std::vector<LearningRun> runs;
  for (std::size_t v = 0; v < kVariants.size(); ++v)
    for (int s = 1; s <= seeds; ++s) {
      LearningRun r{v, static_cast<std::uint64_t>(s), root / (kVariants[v].name + "_seed" + std::to_string(s)), {}};
      const auto t0 = Clock::now();
      const auto res = run_experiment(learning_config(kVariants[v], r.seed, budget), r.dir);
      r.crossing = res.epochs_to_threshold;
      std::printf("  %-13s seed %d: epochs-to-50%% %s (%zu epochs, %.0fs)\n", kVariants[v].name.c_str(), s,
                  r.crossing ? std::to_string(*r.crossing).c_str() : "none", res.curve.size(),
                  std::chrono::duration<double>(Clock::now() - t0).count());
      std::fflush(stdout);
      runs.push_back(r);
    }
  return runs;
}

// Median epochs-to-threshold with runs that never cross counted at the budget.
double median_crossing(const std::vector<LearningRun>& runs, std::size_t variant, int budget) {
  std::vector<double> xs;
  for (const auto& r : runs)
    if (r.variant == variant) xs.push_back(r.crossing.value_or(budget));
  return quantile(xs, 0.5);
}

Outcome ordering(const std::vector<LearningRun>& runs, int budget) {
  const double plain = median_crossing(runs, 0, budget);
  const double her = median_crossing(runs, 1, budget);
  const double cgm = median_crossing(runs, 2, budget);
  const bool a = plain >= budget;
  const bool b = cgm < her;
  std::ostringstream os;
  os << "median epochs-to-50% ddpg " << (a ? "never" : fmt("%.0f", plain)) << ", ddpg+her "
     << (her >= budget ? "never" : fmt("%.0f", her)) << ", ddpg+her+cgm " << (cgm >= budget ? "never" : fmt("%.0f", cgm))
     << " (budget " << budget << ")";
  if (!a) os << "; ddpg reached 50%";
  if (!b) os << "; cgm not earlier";
  return {a && b, os.str()};
}

Outcome mask_structure(const std::vector<LearningRun>& runs) {
  std::ostringstream os;
  bool pass = true;
  int checked = 0;
  for (const auto& r : runs) {
    if (r.variant != 2) continue;
    const auto table = load_metrics(r.dir);
    const auto& full = table.column("est_111");
    std::optional<std::size_t> row;
    for (std::size_t i = 0; i < full.size() && !row; ++i)
      if (full[i] > 0.1) row = i;
    if (!row) {
      pass = false;
      os << " seed " << r.seed << ": full-mask estimate never exceeds 10%;";
      continue;
    }
    for (const auto& bits : table.masks_with_prefix("est_"))
      if (bits[2] == '0' && table.column("est_" + bits)[*row] < full[*row]) {
        pass = false;
        os << " seed " << r.seed << ": mask " << bits << " below full mask;";
      }
    const auto ind = validate_independence(r.dir);
    const auto& m = ind.masks.back();
    if (!m.spearman || *m.spearman <= 0.5) {
      pass = false;
      os << " seed " << r.seed << ": full-mask rank correlation "
         << (m.spearman ? fmt("%.2f", *m.spearman) : std::string("undefined")) << ";";
    } else {
      os << " seed " << r.seed << " rho " << fmt("%.2f", *m.spearman) << " at epoch " << *row << ";";
    }
    ++checked;
  }
  return {pass && checked > 0, "cgm runs:" + os.str()};
}

Outcome determinism(const std::vector<LearningRun>& first, const std::vector<LearningRun>& second) {
  int same = 0;
  std::ostringstream os;
  for (std::size_t i = 0; i < first.size(); ++i) {
    if (slurp(first[i].dir / "metrics.csv") == slurp(second[i].dir / "metrics.csv"))
      ++same;
    else
      os << " differs: " << first[i].dir.filename().string();
  }
  os << " " << same << "/" << first.size() << " metrics CSVs byte-identical";
  return {same == static_cast<int>(first.size()), os.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  bool properties = false, learning = false;
  std::string out = "acceptance_runs";
  int seeds = 5, budget = 150;
  app.add_flag("--properties", properties, "criteria 1-6");
  app.add_flag("--learning", learning, "criteria 7-9");
  app.add_option("--out", out, "directory for learning runs");
  app.add_option("--seeds", seeds)->check(CLI::PositiveNumber);
  app.add_option("--budget", budget)->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);
  if (!properties && !learning) properties = learning = true;

  if (properties) {
    report(1, "mask application", 1, mask_suite);
    report(2, "estimator oracle", 10, estimator_oracle);
    report(3, "sampler distribution", 10, sampler_distribution);
    report(4, "hindsight ratio", 10, her_ratio);
    report(5, "gradient checks", 30, gradient_checks);
    report(6, "exploration ratio", 5, exploration_ratio);
  }

  if (learning) {
    const fs::path root(out);
    fs::remove_all(root);
    std::vector<LearningRun> first, second;
    const auto t0 = Clock::now();
    try {
      std::printf("learning runs (lift, %d seeds, budget %d epochs)\n", seeds, budget);
      first = run_all(root / "first", seeds, budget);
    } catch (const std::exception& e) {
      std::printf("learning runs aborted: %s\n", e.what());
    }
    const double minutes = std::chrono::duration<double>(Clock::now() - t0).count() / 60.0;
    report(7, "learning-curve ordering", 0, [&]() -> Outcome {
      if (first.empty()) return {false, "runs did not complete"};
      auto o = ordering(first, budget);
      o.detail += fmt("; %.1f min (limit 45)", minutes);
      if (minutes > 45.0) o.pass = false;
      return o;
    });
    report(8, "mask success structure", 0, [&]() -> Outcome {
      if (first.empty()) return {false, "runs did not complete"};
      return mask_structure(first);
    });
    report(9, "determinism", 0, [&]() -> Outcome {
      if (first.empty()) return {false, "runs did not complete"};
      std::printf("repeat runs\n");
      second = run_all(root / "repeat", seeds, budget);
      return determinism(first, second);
    });
  }
  return g_failures == 0 ? 0 : 1;
}
