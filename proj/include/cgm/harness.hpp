#pragma once

// Experiment driver: single runs, seeded sweeps over configuration grids, and
// the estimated-vs-training success comparison.
//
// Run directory layout:
//   config.txt          full RunConfig (re-running it reproduces metrics.csv)
//   metrics.csv         one row per epoch, see metrics.hpp
//   summary.json        curve, crossing epoch, final success, versions
//   checkpoints/final/  learner state after the last epoch
//   checkpoints/epoch_NNNN/  every `checkpoint_every` epochs when > 0

#include <Eigen/Core>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cgm/config.hpp"
#include "cgm/ddpg.hpp"
#include "cgm/error.hpp"
#include "cgm/metrics.hpp"

namespace cgm {

namespace fs = std::filesystem;

struct RunResult {
  fs::path dir;
  std::vector<double> curve;  // evaluation success rate per epoch
  std::optional<int> epochs_to_threshold;
  double final_success = 0.0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

namespace harness_detail {

inline std::string version_string() {
  std::ostringstream os;
  os << "cgm " << kLibraryVersion << "; eigen " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.'
     << EIGEN_MINOR_VERSION;
  return os.str();
}

inline nlohmann::json optional_json(const std::optional<int>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

inline std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return in;
}

}  // namespace harness_detail

inline nlohmann::json run_summary(const RunConfig& cfg, const std::vector<double>& curve,
                                  const std::vector<GoalMask>& masks) {
  nlohmann::json j;
  j["schema"] = "cgm-summary/1";
  j["version"] = harness_detail::version_string();
  j["env"] = std::string(to_string(cfg.trainer.env));
  j["algo"] = std::string(to_string(cfg.algorithm));
  j["cgm"] = cfg.trainer.cgm;
  j["cg"] = cfg.trainer.curriculum.target_success;
  j["kappa"] = cfg.trainer.curriculum.sharpness;
  j["form"] = std::string(to_string(cfg.trainer.curriculum.form));
  j["seed"] = cfg.trainer.seed;
  j["epochs"] = cfg.epochs;
  j["threshold"] = cfg.threshold;
  j["epochs_run"] = curve.size();
  j["epochs_to_threshold"] = harness_detail::optional_json(epochs_to_threshold(curve, cfg.threshold));
  j["final_success"] = curve.empty() ? nlohmann::json(nullptr) : nlohmann::json(curve.back());
  j["curve"] = curve;
  std::vector<std::string> bits;
  for (const auto& m : masks) bits.push_back(m.to_string());
  j["masks"] = bits;
  return j;
}

/// Runs `cfg.epochs` epochs into `dir`. The config is validated before the
/// directory is touched.
inline RunResult run_experiment(const RunConfig& cfg, const fs::path& dir, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  Trainer trainer(cfg.resolved());

  fs::create_directories(dir);
  {
    std::ostringstream os;
    write_config(os, cfg);
    harness_detail::write_text(dir / "config.txt", os.str());
  }
  std::ofstream metrics(dir / "metrics.csv", std::ios::binary);
  if (!metrics) throw InputError("cannot write " + (dir / "metrics.csv").string());
  write_metrics_header(metrics, trainer.masks(), goal_dim(cfg.trainer.env));

  RunResult result;
  result.dir = dir;
  for (int e = 0; e < cfg.epochs; ++e) {
    const auto stats = trainer.run_epoch();
    write_metrics_row(metrics, stats);
    metrics.flush();
    result.curve.push_back(stats.success_rate);
    if (on_epoch) on_epoch(stats);
    if (cfg.checkpoint_every > 0 && (e + 1) % cfg.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04d", e + 1);
      trainer.save_checkpoint(dir / "checkpoints" / name);
    }
    if (cfg.stop_after_crossing >= 0) {
      const auto crossed = epochs_to_threshold(result.curve, cfg.threshold);
      if (crossed && e - *crossed >= cfg.stop_after_crossing) break;
    }
  }
  metrics.close();
  trainer.save_checkpoint(dir / "checkpoints" / "final");

  result.epochs_to_threshold = epochs_to_threshold(result.curve, cfg.threshold);
  result.final_success = result.curve.empty() ? 0.0 : result.curve.back();
  harness_detail::write_text(dir / "summary.json", run_summary(cfg, result.curve, trainer.masks()).dump(2) + "\n");
  return result;
}

/// Reads a run's stored config (the reproduction entry point).
inline RunConfig load_run_config(const fs::path& dir) {
  auto in = harness_detail::open_input(dir / "config.txt");
  return parse_config(in);
}

inline MetricsTable load_metrics(const fs::path& dir) {
  auto in = harness_detail::open_input(dir / "metrics.csv");
  return MetricsTable::read(in);
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct SweepCell {
  std::string label;  // the override line, e.g. "cgm=on cg=0.1 kappa=32"
  RunConfig config;
};

/// One cell per non-empty, non-comment line; each line holds whitespace
/// separated key=value overrides applied on top of `base`.
inline std::vector<SweepCell> parse_grid(std::istream& in, const RunConfig& base = {}) {
  std::vector<SweepCell> cells;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    SweepCell cell{line, base};
    std::stringstream ss(line);
    std::string token;
    try {
      while (ss >> token) apply_assignment(cell.config, token);
    } catch (const ConfigError& e) {
      throw ConfigError("grid line " + std::to_string(lineno) + ": " + e.what());
    }
    cells.push_back(std::move(cell));
  }
  return cells;
}

struct SweepRun {
  std::size_t cell = 0;
  std::uint64_t seed = 0;
  fs::path dir;
  bool ok = false;
  std::string error;
  std::optional<int> epochs_to_threshold;
  double final_success = 0.0;
};

struct CellAggregate {
  std::string label;
  int budget = 0;
  int runs = 0;
  int failed = 0;
  int censored = 0;      // finished runs that never reached the threshold
  Quartiles crossing;    // epochs-to-threshold, censored runs counted at `budget`
  Quartiles final_success;
  bool all_censored = false;
};

struct SweepReport {
  std::vector<SweepRun> runs;
  std::vector<CellAggregate> cells;
};

inline std::string run_dir_name(std::size_t cell, std::uint64_t seed) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "cell%03zu_seed%llu", cell, static_cast<unsigned long long>(seed));
  return buf;
}

/// Aggregates finished runs by cell. Pure function of the run records.
inline std::vector<CellAggregate> aggregate_runs(const std::vector<SweepCell>& grid, const std::vector<SweepRun>& runs) {
  std::vector<CellAggregate> out;
  for (std::size_t c = 0; c < grid.size(); ++c) {
    CellAggregate a;
    a.label = grid[c].label;
    a.budget = grid[c].config.epochs;
    std::vector<double> crossings, finals;
    for (const auto& r : runs) {
      if (r.cell != c) continue;
      ++a.runs;
      if (!r.ok) {
        ++a.failed;
        continue;
      }
      if (!r.epochs_to_threshold) ++a.censored;
      crossings.push_back(static_cast<double>(r.epochs_to_threshold.value_or(a.budget)));
      finals.push_back(r.final_success);
    }
    if (!crossings.empty()) {
      a.crossing = quartiles(crossings);
      a.final_success = quartiles(finals);
      a.all_censored = a.censored == static_cast<int>(crossings.size());
    }
    out.push_back(a);
  }
  return out;
}

inline void write_aggregate_csv(std::ostream& out, const std::vector<CellAggregate>& cells) {
  out << "# schema=cgm-aggregate/1 aggregation=median-of-crossings censored=at-budget quantiles=linear\n";
  out << "cell,label,budget,runs,failed,censored,all_censored,epochs_q1,epochs_median,epochs_q3,final_q1,"
         "final_median,final_q3\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    const bool any = c.runs > c.failed;
    auto num = [&](double v) { return any ? format_real(v) : std::string("nan"); };
    out << i << ",\"" << c.label << "\"," << c.budget << ',' << c.runs << ',' << c.failed << ',' << c.censored << ','
        << (c.all_censored ? 1 : 0) << ',' << num(c.crossing.q1) << ',' << num(c.crossing.median) << ','
        << num(c.crossing.q3) << ',' << num(c.final_success.q1) << ',' << num(c.final_success.median) << ','
        << num(c.final_success.q3) << '\n';
  }
}

inline void write_runs_csv(std::ostream& out, const std::vector<SweepRun>& runs) {
  out << "# schema=cgm-runs/1\n";
  out << "cell,seed,dir,status,epochs_to_threshold,final_success,error\n";
  for (const auto& r : runs) {
    std::string err = r.error;
    for (char& ch : err)
      if (ch == '"' || ch == '\n' || ch == ',') ch = ' ';
    out << r.cell << ',' << r.seed << ',' << r.dir.filename().string() << ',' << (r.ok ? "ok" : "error") << ','
        << (r.epochs_to_threshold ? std::to_string(*r.epochs_to_threshold) : std::string("none")) << ','
        << format_real(r.ok ? r.final_success : std::nan("")) << ",\"" << err << "\"\n";
  }
}

/// Runs every (cell, seed) pair into `out_dir`. A failing cell is recorded
/// and the sweep moves on.
inline SweepReport sweep(const std::vector<SweepCell>& grid, const std::vector<std::uint64_t>& seeds,
                         const fs::path& out_dir,
                         const std::function<void(const SweepRun&)>& on_run = {}) {
  detail::require<ConfigError>(!grid.empty(), "sweep grid is empty");
  detail::require<ConfigError>(!seeds.empty(), "sweep seed list is empty");
  fs::create_directories(out_dir);
  SweepReport report;
  for (std::size_t c = 0; c < grid.size(); ++c) {
    for (auto seed : seeds) {
      SweepRun run;
      run.cell = c;
      run.seed = seed;
      run.dir = out_dir / run_dir_name(c, seed);
      try {
        RunConfig cfg = grid[c].config;
        cfg.trainer.seed = seed;
        const auto res = run_experiment(cfg, run.dir);
        run.ok = true;
        run.epochs_to_threshold = res.epochs_to_threshold;
        run.final_success = res.final_success;
      } catch (const std::exception& e) {
        run.error = e.what();
      }
      if (on_run) on_run(run);
      report.runs.push_back(std::move(run));
    }
  }
  report.cells = aggregate_runs(grid, report.runs);
  {
    std::ostringstream os;
    write_aggregate_csv(os, report.cells);
    harness_detail::write_text(out_dir / "aggregate.csv", os.str());
  }
  {
    std::ostringstream os;
    write_runs_csv(os, report.runs);
    harness_detail::write_text(out_dir / "runs.csv", os.str());
  }
  {
    std::ostringstream os;
    for (const auto& cell : grid) os << cell.label << '\n';
    harness_detail::write_text(out_dir / "grid.txt", os.str());
  }
  return report;
}

// ---------------------------------------------------------------------------
// Estimated vs training success
// ---------------------------------------------------------------------------

struct MaskIndependence {
  std::string mask;
  std::size_t points = 0;  // epochs where the mask was sampled for training
  std::optional<double> spearman;
  std::optional<double> pearson;
  double max_gap = 0.0;
  double mean_gap = 0.0;
  double mean_estimated = 0.0;
  double mean_training = 0.0;
  bool diverges = false;  // rank correlation defined and not positive
};

struct IndependenceReport {
  std::vector<MaskIndependence> masks;
};

/// Pairs est_<mask> and train_<mask> row by row, skipping rows where the
/// mask was not sampled (train is nan).
inline IndependenceReport independence_from_table(const MetricsTable& t) {
  const auto est = t.masks_with_prefix("est_");
  const auto train = t.masks_with_prefix("train_");
  if (est.empty() || est != train) throw InputError("metrics CSV lacks matching est_/train_ mask series");
  IndependenceReport report;
  for (const auto& bits : est) {
    const auto& e = t.column("est_" + bits);
    const auto& tr = t.column("train_" + bits);
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < e.size(); ++i)
      if (!std::isnan(tr[i]) && !std::isnan(e[i])) {
        xs.push_back(e[i]);
        ys.push_back(tr[i]);
      }
    MaskIndependence m;
    m.mask = bits;
    m.points = xs.size();
    m.spearman = spearman(xs, ys);
    m.pearson = pearson(xs, ys);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double gap = std::abs(xs[i] - ys[i]);
      m.max_gap = std::max(m.max_gap, gap);
      m.mean_gap += gap;
      m.mean_estimated += xs[i];
      m.mean_training += ys[i];
    }
    if (!xs.empty()) {
      const auto n = static_cast<double>(xs.size());
      m.mean_gap /= n;
      m.mean_estimated /= n;
      m.mean_training /= n;
    }
    m.diverges = m.spearman && *m.spearman <= 0.0;
    report.masks.push_back(m);
  }
  return report;
}

inline nlohmann::json to_json(const IndependenceReport& r) {
  nlohmann::json j;
  j["schema"] = "cgm-independence/1";
  j["pairing"] = "same epoch row; rows where the mask was not sampled are skipped";
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  for (const auto& m : r.masks) {
    j["masks"].push_back({{"mask", m.mask},
                          {"points", m.points},
                          {"spearman", opt(m.spearman)},
                          {"pearson", opt(m.pearson)},
                          {"max_gap", m.max_gap},
                          {"mean_gap", m.mean_gap},
                          {"mean_estimated", m.mean_estimated},
                          {"mean_training", m.mean_training},
                          {"diverges", m.diverges}});
  }
  return j;
}

/// Reads `dir/metrics.csv`, writes `dir/independence.json`.
inline IndependenceReport validate_independence(const fs::path& dir) {
  const auto report = independence_from_table(load_metrics(dir));
  harness_detail::write_text(dir / "independence.json", to_json(report).dump(2) + "\n");
  return report;
}

}  // namespace cgm
