#pragma once

// Per-epoch metrics CSV and the small statistics used by reports.
//
// The CSV starts with a schema line, then a header row:
//   # schema=cgm-metrics/1
//   epoch,success_rate,dim_rate_0..,est_<bits>..,train_<bits>..,hist_<bits>..,
//   critic_loss,actor_objective,transitions
// Readers look columns up by name, never by position. Undefined values
// (training success of a mask that was not sampled) are written as "nan".

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cgm/ddpg.hpp"
#include "cgm/error.hpp"

namespace cgm {

inline constexpr std::string_view kMetricsSchema = "cgm-metrics/1";

inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline void write_metrics_header(std::ostream& out, std::span<const GoalMask> masks, int dims) {
  out << "# schema=" << kMetricsSchema << '\n';
  out << "epoch,success_rate";
  for (int i = 0; i < dims; ++i) out << ",dim_rate_" << i;
  for (const char* prefix : {"est_", "train_", "hist_"})
    for (const auto& m : masks) out << ',' << prefix << m.to_string();
  out << ",critic_loss,actor_objective,transitions\n";
}

inline void write_metrics_row(std::ostream& out, const EpochStats& s) {
  out << s.epoch << ',' << format_real(s.success_rate);
  for (double r : s.dim_rates) out << ',' << format_real(r);
  for (double e : s.estimated) out << ',' << format_real(e);
  for (double t : s.training_success) out << ',' << format_real(t);
  for (int h : s.histogram) out << ',' << h;
  out << ',' << format_real(s.critic_loss) << ',' << format_real(s.actor_objective) << ',' << s.transitions_added
      << '\n';
}

/// Parsed metrics CSV: named numeric columns of equal length.
class MetricsTable {
 public:
  static MetricsTable read(std::istream& in) {
    MetricsTable t;
    std::string line;
    if (!std::getline(in, line)) throw InputError("metrics CSV is empty");
    if (line != "# schema=" + std::string(kMetricsSchema))
      throw InputError("metrics CSV has unsupported schema line '" + line + "'");
    if (!std::getline(in, line) || line.empty()) throw InputError("metrics CSV has no header row");
    t.names_ = split(line);
    for (std::size_t i = 0; i < t.names_.size(); ++i) t.index_[t.names_[i]] = i;
    for (const char* required : {"epoch", "success_rate"})
      if (!t.has(required)) throw InputError(std::string("metrics CSV lacks column '") + required + "'");
    t.data_.assign(t.names_.size(), {});
    int lineno = 2;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto cells = split(line);
      if (cells.size() != t.names_.size())
        throw InputError("metrics CSV line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                         " cells, expected " + std::to_string(t.names_.size()));
      for (std::size_t i = 0; i < cells.size(); ++i) t.data_[i].push_back(parse_cell(cells[i], lineno));
    }
    return t;
  }

  std::size_t rows() const { return data_.empty() ? 0 : data_.front().size(); }
  const std::vector<std::string>& names() const { return names_; }
  bool has(const std::string& name) const { return index_.count(name) > 0; }

  const std::vector<double>& column(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw InputError("metrics CSV lacks column '" + name + "'");
    return data_[it->second];
  }

  /// Mask bit strings, in column order, for columns named `<prefix><bits>`.
  std::vector<std::string> masks_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& n : names_)
      if (n.rfind(prefix, 0) == 0) out.push_back(n.substr(prefix.size()));
    return out;
  }

 private:
  static std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
  }

  static double parse_cell(const std::string& s, int lineno) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size())
      throw InputError("metrics CSV line " + std::to_string(lineno) + ": bad number '" + s + "'");
    return v;
  }

  std::vector<std::string> names_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::vector<double>> data_;
};

/// First zero-based epoch whose success rate is >= threshold.
inline std::optional<int> epochs_to_threshold(std::span<const double> curve, double threshold) {
  for (std::size_t i = 0; i < curve.size(); ++i)
    if (curve[i] >= threshold) return static_cast<int>(i);
  return std::nullopt;
}

/// Quantile by linear interpolation between order statistics
/// (position q * (n - 1) in the sorted sample).
inline double quantile(std::vector<double> values, double q) {
  detail::require<ConfigError>(!values.empty(), "quantile of an empty sample");
  detail::require<ConfigError>(q >= 0.0 && q <= 1.0, "quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

struct Quartiles {
  double q1 = 0.0, median = 0.0, q3 = 0.0;
};

inline Quartiles quartiles(const std::vector<double>& values) {
  return {quantile(values, 0.25), quantile(values, 0.5), quantile(values, 0.75)};
}

/// Pearson correlation; none when n < 2 or either series is constant.
inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  detail::require<ShapeError>(x.size() == y.size(), "correlation series differ in length");
  const std::size_t n = x.size();
  if (n < 2) return std::nullopt;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 1e-24 || syy <= 1e-24) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

/// Ranks starting at 1; ties share their average rank.
inline std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  detail::require<ShapeError>(x.size() == y.size(), "correlation series differ in length");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

}  // namespace cgm
