// Command line front end: train, sweep, plot, validate-independence.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cgm/cgm.hpp"

namespace {

struct CommonOptions {
  std::string config_file;
  std::vector<std::string> sets;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--config", o.config_file, "flat key = value config file");
  app->add_option("--set", o.sets, "override, key=value (repeatable)");
}

cgm::RunConfig base_config(const CommonOptions& o) {
  cgm::RunConfig cfg;
  if (!o.config_file.empty()) {
    std::ifstream in(o.config_file);
    if (!in) throw cgm::InputError("cannot open config file " + o.config_file);
    cfg = cgm::parse_config(in, cfg);
  }
  for (const auto& s : o.sets) cgm::apply_assignment(cfg, s);
  return cfg;
}

std::string crossing(const std::optional<int>& e) { return e ? std::to_string(*e) : std::string("none"); }

std::vector<std::uint64_t> parse_seeds(const std::string& list) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(list);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty()) continue;
    seeds.push_back(cgm::config_detail::to_uint("seeds", cgm::config_detail::trim(part)));
  }
  if (seeds.empty()) throw cgm::ConfigError("--seeds needs at least one seed");
  return seeds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Curriculum goal masking for goal-conditioned DDPG"};
  app.require_subcommand(1);

  // train
  CommonOptions train_common;
  std::map<std::string, std::string> flags;
  std::string out_dir = "run";
  bool quiet = false;
  auto* train = app.add_subcommand("train", "run one experiment");
  add_common(train, train_common);
  for (const char* key : {"env", "algo", "cgm", "cg", "kappa", "form", "seed", "epochs"}) {
    train->add_option_function<std::string>(std::string("--") + key,
                                            [&flags, key](const std::string& v) { flags[key] = v; });
  }
  train->add_option("--out", out_dir, "run directory");
  train->add_flag("--quiet", quiet, "no per-epoch output");

  // sweep
  CommonOptions sweep_common;
  std::string grid_file, seed_list = "1,2,3,4,5", sweep_out = "sweep";
  auto* sweep = app.add_subcommand("sweep", "run a grid of configs over several seeds");
  add_common(sweep, sweep_common);
  sweep->add_option("--grid", grid_file, "one line of key=value overrides per cell")->required();
  sweep->add_option("--seeds", seed_list, "comma separated seeds");
  sweep->add_option("--out", sweep_out, "sweep directory");

  // plot
  std::string plot_dir;
  double plot_threshold = 0.5;
  auto* plot = app.add_subcommand("plot", "render SVGs for a run or sweep directory");
  plot->add_option("dir", plot_dir)->required();
  plot->add_option("--threshold", plot_threshold);

  // validate-independence
  std::string indep_dir;
  auto* indep = app.add_subcommand("validate-independence", "compare estimated and training mask success");
  indep->add_option("dir", indep_dir)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      auto cfg = base_config(train_common);
      for (const auto& [k, v] : flags) cgm::set_config_value(cfg, k, v);
      cfg.validate();
      const auto res = cgm::run_experiment(cfg, out_dir, [&](const cgm::EpochStats& s) {
        if (quiet) return;
        std::printf("epoch %4d  success %.2f  rates", s.epoch, s.success_rate);
        for (double r : s.dim_rates) std::printf(" %.2f", r);
        std::printf("  critic %.4f\n", s.critic_loss);
        std::fflush(stdout);
      });
      std::printf("epochs_to_threshold=%s final_success=%.2f dir=%s\n", crossing(res.epochs_to_threshold).c_str(),
                  res.final_success, res.dir.string().c_str());
    } else if (*sweep) {
      const auto base = base_config(sweep_common);
      std::ifstream in(grid_file);
      if (!in) throw cgm::InputError("cannot open grid file " + grid_file);
      const auto grid = cgm::parse_grid(in, base);
      const auto seeds = parse_seeds(seed_list);
      const auto report = cgm::sweep(grid, seeds, sweep_out, [](const cgm::SweepRun& r) {
        std::printf("cell %zu seed %llu: %s epochs_to_threshold=%s final=%.2f\n", r.cell,
                    static_cast<unsigned long long>(r.seed), r.ok ? "ok" : r.error.c_str(),
                    crossing(r.epochs_to_threshold).c_str(), r.final_success);
        std::fflush(stdout);
      });
      for (const auto& c : report.cells)
        std::printf("%-40s median epochs %s%.1f  final %.2f  (%d runs, %d failed)\n", c.label.c_str(),
                    c.all_censored ? ">=" : "", c.crossing.median, c.final_success.median, c.runs, c.failed);
    } else if (*plot) {
      for (const auto& p : cgm::emit_plots(plot_dir, plot_threshold)) std::printf("%s\n", p.string().c_str());
    } else if (*indep) {
      const auto report = cgm::validate_independence(indep_dir);
      std::printf("%-6s %6s %9s %9s %8s %8s %s\n", "mask", "points", "spearman", "pearson", "max_gap", "mean_gap",
                  "diverges");
      auto opt = [](const std::optional<double>& v) {
        char buf[32];
        if (v) std::snprintf(buf, sizeof buf, "%.3f", *v);
        else std::snprintf(buf, sizeof buf, "undef");
        return std::string(buf);
      };
      for (const auto& m : report.masks)
        std::printf("%-6s %6zu %9s %9s %8.3f %8.3f %s\n", m.mask.c_str(), m.points, opt(m.spearman).c_str(),
                    opt(m.pearson).c_str(), m.max_gap, m.mean_gap, m.diverges ? "yes" : "no");
    }
  } catch (const cgm::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
