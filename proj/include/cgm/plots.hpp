#pragma once

// Deterministic SVG rendering of run and sweep metrics. Output is a pure
// function of the CSV files in the directory.
//
//   learning_curve.svg       success rate per epoch (median and interquartile band)
//   epochs_to_threshold.svg  epochs to 50% per cell, censored cells marked
//   mask_success.svg         estimated and training success per mask, two panels

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cgm/error.hpp"
#include "cgm/harness.hpp"
#include "cgm/metrics.hpp"

namespace cgm {

namespace plot_detail {

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return colors[i % 10];
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else if (c == '"') out += "&quot;";
    else out += c;
  }
  return out;
}

/// One rectangular axes region inside an SVG document.
struct Panel {
  double x0, y0, w, h;        // pixel box
  double xmin, xmax, ymin, ymax;

  double px(double x) const { return x0 + (xmax > xmin ? (x - xmin) / (xmax - xmin) : 0.5) * w; }
  double py(double y) const { return y0 + h - (ymax > ymin ? (y - ymin) / (ymax - ymin) : 0.5) * h; }
};

class Svg {
 public:
  Svg(int width, int height) : width_(width), height_(height) {}

  void axes(const Panel& p, const std::string& title, const std::string& xlabel, const std::string& ylabel) {
    os_ << "<rect x=\"" << num(p.x0) << "\" y=\"" << num(p.y0) << "\" width=\"" << num(p.w) << "\" height=\""
        << num(p.h) << "\" fill=\"none\" stroke=\"#000\"/>\n";
    for (int i = 0; i <= 4; ++i) {
      const double fy = p.ymin + (p.ymax - p.ymin) * i / 4.0;
      const double fx = p.xmin + (p.xmax - p.xmin) * i / 4.0;
      text(p.x0 - 6, p.py(fy) + 4, num(fy), "end", 10);
      text(p.px(fx), p.y0 + p.h + 14, num(fx), "middle", 10);
      line(p.x0, p.py(fy), p.x0 + p.w, p.py(fy), "#ddd", 0.5);
    }
    text(p.x0 + p.w / 2, p.y0 - 8, title, "middle", 13);
    text(p.x0 + p.w / 2, p.y0 + p.h + 30, xlabel, "middle", 11);
    os_ << "<text x=\"" << num(p.x0 - 38) << "\" y=\"" << num(p.y0 + p.h / 2) << "\" font-size=\"11\" "
        << "text-anchor=\"middle\" transform=\"rotate(-90 " << num(p.x0 - 38) << ' ' << num(p.y0 + p.h / 2)
        << ")\">" << escape(ylabel) << "</text>\n";
  }

  void line(double x1, double y1, double x2, double y2, const std::string& color, double width = 1.0) {
    os_ << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2) << "\" y2=\"" << num(y2)
        << "\" stroke=\"" << color << "\" stroke-width=\"" << num(width) << "\"/>\n";
  }

  void polyline(const Panel& p, const std::vector<double>& xs, const std::vector<double>& ys, const std::string& color,
                bool dashed = false) {
    std::ostringstream pts;
    std::size_t count = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (std::isnan(ys[i])) continue;
      pts << (count++ ? " " : "") << num(p.px(xs[i])) << ',' << num(p.py(ys[i]));
    }
    if (count == 0) return;
    if (count == 1) {
      const auto s = pts.str();
      const auto comma = s.find(',');
      circle(std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1)), 2.5, color);
      return;
    }
    os_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\""
        << (dashed ? " stroke-dasharray=\"4 3\"" : "") << " points=\"" << pts.str() << "\"/>\n";
  }

  void band(const Panel& p, const std::vector<double>& xs, const std::vector<double>& lo, const std::vector<double>& hi,
            const std::string& color) {
    if (xs.empty()) return;
    std::ostringstream pts;
    for (std::size_t i = 0; i < xs.size(); ++i) pts << (i ? " " : "") << num(p.px(xs[i])) << ',' << num(p.py(hi[i]));
    for (std::size_t i = xs.size(); i-- > 0;) pts << ' ' << num(p.px(xs[i])) << ',' << num(p.py(lo[i]));
    os_ << "<polygon fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"" << pts.str() << "\"/>\n";
  }

  void rect(double x, double y, double w, double h, const std::string& color, const std::string& extra = {}) {
    os_ << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w) << "\" height=\"" << num(h)
        << "\" fill=\"" << color << "\"" << extra << "/>\n";
  }

  void circle(double x, double y, double r, const std::string& color) {
    os_ << "<circle cx=\"" << num(x) << "\" cy=\"" << num(y) << "\" r=\"" << num(r) << "\" fill=\"" << color
        << "\"/>\n";
  }

  void text(double x, double y, const std::string& s, const char* anchor = "start", int size = 11) {
    os_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"" << size << "\" text-anchor=\"" << anchor
        << "\">" << escape(s) << "</text>\n";
  }

  void legend(double x, double y, const std::vector<std::string>& labels) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const double yy = y + 14.0 * static_cast<double>(i);
      line(x, yy - 4, x + 16, yy - 4, palette(i), 2.0);
      text(x + 20, yy, labels[i], "start", 10);
    }
  }

  std::string str() const {
    std::ostringstream out;
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width_ << "\" height=\"" << height_
        << "\" viewBox=\"0 0 " << width_ << ' ' << height_ << "\" font-family=\"sans-serif\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n"
        << os_.str() << "</svg>\n";
    return out.str();
  }

 private:
  int width_, height_;
  std::ostringstream os_;
};

struct Series {
  std::string label;
  std::vector<double> median, q1, q3;
};

/// Per-epoch quartiles across runs, truncated to the shortest run.
inline Series epochwise(const std::string& label, const std::vector<std::vector<double>>& runs) {
  Series s{label, {}, {}, {}};
  if (runs.empty()) return s;
  std::size_t len = runs.front().size();
  for (const auto& r : runs) len = std::min(len, r.size());
  for (std::size_t e = 0; e < len; ++e) {
    std::vector<double> v;
    for (const auto& r : runs)
      if (!std::isnan(r[e])) v.push_back(r[e]);
    if (v.empty()) {
      s.median.push_back(std::nan(""));
      s.q1.push_back(std::nan(""));
      s.q3.push_back(std::nan(""));
      continue;
    }
    const auto q = quartiles(v);
    s.median.push_back(q.median);
    s.q1.push_back(q.q1);
    s.q3.push_back(q.q3);
  }
  return s;
}

struct CellData {
  std::string label;
  std::vector<MetricsTable> runs;
};

inline std::string learning_curve_svg(const std::vector<CellData>& cells) {
  Svg svg(640, 420);
  std::size_t max_len = 1;
  for (const auto& c : cells)
    for (const auto& r : c.runs) max_len = std::max(max_len, r.rows());
  const Panel p{70, 40, 420, 320, 0.0, static_cast<double>(std::max<std::size_t>(max_len - 1, 1)), 0.0, 1.0};
  svg.axes(p, "Evaluation success rate", "epoch", "success rate");
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    std::vector<std::vector<double>> curves;
    for (const auto& r : cells[i].runs) curves.push_back(r.column("success_rate"));
    const auto s = epochwise(cells[i].label, curves);
    std::vector<double> xs(s.median.size());
    for (std::size_t e = 0; e < xs.size(); ++e) xs[e] = static_cast<double>(e);
    svg.band(p, xs, s.q1, s.q3, palette(i));
    svg.polyline(p, xs, s.median, palette(i));
    labels.push_back(cells[i].label);
  }
  svg.line(p.x0, p.py(0.5), p.x0 + p.w, p.py(0.5), "#888", 0.8);
  svg.legend(505, 50, labels);
  return svg.str();
}

inline std::string epochs_to_threshold_svg(const std::vector<CellData>& cells, double threshold) {
  Svg svg(640, 420);
  std::vector<Quartiles> qs;
  std::vector<bool> censored;
  double ymax = 1.0;
  for (const auto& c : cells) {
    std::vector<double> crossings;
    bool all_censored = true;
    for (const auto& r : c.runs) {
      const auto& curve = r.column("success_rate");
      const auto hit = epochs_to_threshold(curve, threshold);
      if (hit) all_censored = false;
      crossings.push_back(static_cast<double>(hit.value_or(static_cast<int>(curve.size()))));
    }
    qs.push_back(crossings.empty() ? Quartiles{} : quartiles(crossings));
    censored.push_back(all_censored);
    ymax = std::max(ymax, qs.back().q3);
  }
  const double n = static_cast<double>(std::max<std::size_t>(cells.size(), 1));
  const Panel p{70, 40, 540, 300, -0.5, n - 0.5, 0.0, ymax * 1.1};
  svg.axes(p, "Epochs to " + num(threshold * 100.0) + "% success (median, IQR)", "cell", "epochs");
  const double bw = 0.6 * p.w / n;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const double cx = p.px(static_cast<double>(i));
    const auto& q = qs[i];
    svg.rect(cx - bw / 2, p.py(q.median), bw, p.py(0.0) - p.py(q.median), palette(i),
             censored[i] ? " fill-opacity=\"0.3\"" : "");
    svg.line(cx, p.py(q.q1), cx, p.py(q.q3), "#000", 1.2);
    svg.line(cx - bw / 4, p.py(q.q1), cx + bw / 4, p.py(q.q1), "#000", 1.2);
    svg.line(cx - bw / 4, p.py(q.q3), cx + bw / 4, p.py(q.q3), "#000", 1.2);
    if (censored[i]) svg.text(cx, p.py(q.median) - 4, "censored", "middle", 9);
    svg.text(cx, p.y0 + p.h + 44 + 12.0 * static_cast<double>(i % 3), cells[i].label, "middle", 9);
  }
  return svg.str();
}

inline std::string mask_success_svg(const CellData& cell) {
  Svg svg(900, 420);
  std::size_t max_len = 1;
  for (const auto& r : cell.runs) max_len = std::max(max_len, r.rows());
  const double xmax = static_cast<double>(std::max<std::size_t>(max_len - 1, 1));
  const Panel left{70, 40, 330, 320, 0.0, xmax, 0.0, 1.0};
  const Panel right{470, 40, 330, 320, 0.0, xmax, 0.0, 1.0};
  svg.axes(left, "Estimated mask success", "epoch", "success");
  svg.axes(right, "Training success per mask", "epoch", "success");
  const auto masks = cell.runs.front().masks_with_prefix("est_");
  for (std::size_t m = 0; m < masks.size(); ++m) {
    for (int panel = 0; panel < 2; ++panel) {
      const std::string col = (panel == 0 ? "est_" : "train_") + masks[m];
      std::vector<std::vector<double>> curves;
      for (const auto& r : cell.runs) curves.push_back(r.column(col));
      const auto s = epochwise(col, curves);
      std::vector<double> xs(s.median.size());
      for (std::size_t e = 0; e < xs.size(); ++e) xs[e] = static_cast<double>(e);
      svg.polyline(panel == 0 ? left : right, xs, s.median, palette(m));
    }
  }
  svg.legend(815, 50, masks);
  return svg.str();
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') quoted = !quoted;
    else if (c == ',' && !quoted) {
      cells.push_back(cur);
      cur.clear();
    } else cur += c;
  }
  cells.push_back(cur);
  return cells;
}

/// Cells of a sweep directory, in grid order; only successful runs.
inline std::vector<CellData> load_sweep_cells(const fs::path& dir) {
  std::vector<CellData> cells;
  {
    auto in = harness_detail::open_input(dir / "grid.txt");
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) cells.push_back({line, {}});
  }
  auto in = harness_detail::open_input(dir / "runs.csv");
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() < 4) throw InputError("malformed runs.csv row '" + line + "'");
    const auto c = static_cast<std::size_t>(std::stoul(f[0]));
    if (c >= cells.size()) throw InputError("runs.csv refers to unknown cell " + f[0]);
    if (f[3] == "ok") cells[c].runs.push_back(load_metrics(dir / f[2]));
  }
  std::erase_if(cells, [](const CellData& c) { return c.runs.empty(); });
  if (cells.empty()) throw InputError("sweep directory has no successful runs");
  return cells;
}

}  // namespace plot_detail

/// Writes the three SVGs into `dir`, which is either a run directory
/// (metrics.csv) or a sweep directory (runs.csv). Returns the file paths.
inline std::vector<fs::path> emit_plots(const fs::path& dir, double threshold = 0.5) {
  std::vector<plot_detail::CellData> cells;
  if (fs::exists(dir / "metrics.csv")) {
    cells.push_back({dir.filename().string(), {load_metrics(dir)}});
  } else if (fs::exists(dir / "runs.csv")) {
    cells = plot_detail::load_sweep_cells(dir);
  } else {
    throw InputError("no metrics.csv or runs.csv in " + dir.string());
  }
  for (const auto& c : cells)
    for (const auto& r : c.runs)
      if (r.rows() == 0) throw InputError("metrics CSV has no epoch rows");
  const std::vector<std::pair<std::string, std::string>> files = {
      {"learning_curve.svg", plot_detail::learning_curve_svg(cells)},
      {"epochs_to_threshold.svg", plot_detail::epochs_to_threshold_svg(cells, threshold)},
      {"mask_success.svg", plot_detail::mask_success_svg(cells.front())},
  };
  std::vector<fs::path> out;
  for (const auto& [name, body] : files) {
    harness_detail::write_text(dir / name, body);
    out.push_back(dir / name);
  }
  return out;
}

}  // namespace cgm
