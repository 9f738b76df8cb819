#include "bevbridge/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "bevbridge/pipeline.hpp"

namespace bevbridge {

namespace {

constexpr double kWidth = 800.0;
constexpr double kHeight = 500.0;
constexpr double kLeft = 80.0;
constexpr double kRight = 150.0;  // legend column
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;

constexpr std::array<std::string_view, 8> kPalette = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                                      "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string num(double x) { return format_number(x, 6); }

struct Range {
  double lo = 0.0;
  double hi = 1.0;

  void widen() {
    if (!(hi > lo)) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
};

Range range_of(const std::vector<double>& v) {
  Range r{v.front(), v.front()};
  for (double x : v) {
    r.lo = std::min(r.lo, x);
    r.hi = std::max(r.hi, x);
  }
  return r;
}

Range merge(Range a, Range b) { return {std::min(a.lo, b.lo), std::max(a.hi, b.hi)}; }

// "Nice" tick step for about five ticks.
double tick_step(const Range& r) {
  const double raw = (r.hi - r.lo) / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) return m * mag;
  return 10.0 * mag;
}

class Canvas {
 public:
  Canvas(std::string title, Range x, Range y, bool equal_aspect = false) : title_(std::move(title)), x_(x), y_(y) {
    x_.widen();
    y_.widen();
    if (equal_aspect) {
      const double sx = (x_.hi - x_.lo) / plot_w();
      const double sy = (y_.hi - y_.lo) / plot_h();
      if (sx > sy) {
        const double c = 0.5 * (y_.lo + y_.hi), h = 0.5 * sx * plot_h();
        y_ = {c - h, c + h};
      } else {
        const double c = 0.5 * (x_.lo + x_.hi), h = 0.5 * sy * plot_w();
        x_ = {c - h, c + h};
      }
    }
  }

  static double plot_w() { return kWidth - kLeft - kRight; }
  static double plot_h() { return kHeight - kTop - kBottom; }
  double px(double x) const { return kLeft + (x - x_.lo) / (x_.hi - x_.lo) * plot_w(); }
  double py(double y) const { return kTop + (y_.hi - y) / (y_.hi - y_.lo) * plot_h(); }
  const Range& yrange() const { return y_; }

  void axes(const std::string& xlabel, const std::string& ylabel) {
    body_ << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(plot_w())
          << "\" height=\"" << num(plot_h()) << "\" fill=\"none\" stroke=\"#000\"/>\n";
    ticks(x_, true);
    ticks(y_, false);
    body_ << "<text x=\"" << num(kLeft + plot_w() / 2) << "\" y=\"" << num(kHeight - 15)
          << "\" text-anchor=\"middle\" font-size=\"14\">" << xlabel << "</text>\n";
    body_ << "<text x=\"20\" y=\"" << num(kTop + plot_h() / 2) << "\" text-anchor=\"middle\" font-size=\"14\" "
          << "transform=\"rotate(-90 20 " << num(kTop + plot_h() / 2) << ")\">" << ylabel << "</text>\n";
  }

  void polyline(const std::vector<double>& xs, const std::vector<double>& ys, std::string_view color,
                std::string_view dash = "") {
    body_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"";
    if (!dash.empty()) body_ << " stroke-dasharray=\"" << dash << "\"";
    body_ << " points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) body_ << (i ? " " : "") << num(px(xs[i])) << ',' << num(py(ys[i]));
    body_ << "\"/>\n";
  }

  void hline(double y, std::string_view color, std::string_view label) {
    body_ << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(py(y)) << "\" x2=\"" << num(kLeft + plot_w())
          << "\" y2=\"" << num(py(y)) << "\" stroke=\"" << color << "\" stroke-dasharray=\"6 4\"/>\n";
    if (!label.empty())
      body_ << "<text x=\"" << num(kLeft + plot_w() - 4) << "\" y=\"" << num(py(y) - 4)
            << "\" text-anchor=\"end\" font-size=\"11\" fill=\"" << color << "\">" << label << "</text>\n";
  }

  void rect(double x0, double y0, double x1, double y1, std::string_view color) {
    const double a = px(x0), b = px(x1), top = py(std::max(y0, y1)), bot = py(std::min(y0, y1));
    body_ << "<rect x=\"" << num(a) << "\" y=\"" << num(top) << "\" width=\"" << num(std::max(b - a, 0.1))
          << "\" height=\"" << num(bot - top) << "\" fill=\"" << color << "\"/>\n";
  }

  void marker(double x, double y, std::string_view color, std::string_view tooltip) {
    body_ << "<circle cx=\"" << num(px(x)) << "\" cy=\"" << num(py(y)) << "\" r=\"4\" fill=\"" << color << "\">";
    if (!tooltip.empty()) body_ << "<title>" << tooltip << "</title>";
    body_ << "</circle>\n";
  }

  void legend(std::string_view label, std::string_view color) {
    const double y = kTop + 10 + 18 * legend_rows_++;
    const double x = kWidth - kRight + 10;
    body_ << "<rect x=\"" << num(x) << "\" y=\"" << num(y - 9) << "\" width=\"12\" height=\"10\" fill=\"" << color
          << "\"/>\n<text x=\"" << num(x + 18) << "\" y=\"" << num(y) << "\" font-size=\"12\">" << label
          << "</text>\n";
  }

  std::string str() const {
    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
       << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kWidth) << "\" height=\"" << num(kHeight)
       << "\" viewBox=\"0 0 " << num(kWidth) << ' ' << num(kHeight) << "\" font-family=\"sans-serif\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n"
       << "<text x=\"" << num(kLeft) << "\" y=\"24\" font-size=\"16\">" << title_ << "</text>\n"
       << body_.str() << "</svg>\n";
    return os.str();
  }

 private:
  void ticks(const Range& r, bool horizontal) {
    const double step = tick_step(r);
    for (double t = std::ceil(r.lo / step) * step; t <= r.hi + 1e-9 * step; t += step) {
      const double v = std::abs(t) < 1e-9 * step ? 0.0 : t;
      if (horizontal) {
        const double x = px(v);
        body_ << "<line x1=\"" << num(x) << "\" y1=\"" << num(kTop + plot_h()) << "\" x2=\"" << num(x) << "\" y2=\""
              << num(kTop + plot_h() + 5) << "\" stroke=\"#000\"/>\n<text x=\"" << num(x) << "\" y=\""
              << num(kTop + plot_h() + 18) << "\" text-anchor=\"middle\" font-size=\"11\">" << num(v)
              << "</text>\n";
      } else {
        const double y = py(v);
        body_ << "<line x1=\"" << num(kLeft - 5) << "\" y1=\"" << num(y) << "\" x2=\"" << num(kLeft) << "\" y2=\""
              << num(y) << "\" stroke=\"#000\"/>\n<text x=\"" << num(kLeft - 8) << "\" y=\"" << num(y + 4)
              << "\" text-anchor=\"end\" font-size=\"11\">" << num(v) << "</text>\n";
      }
    }
  }

  std::string title_;
  Range x_, y_;
  std::ostringstream body_;
  int legend_rows_ = 0;
};

std::vector<double> column(const CsvTable& t, std::string_view name) {
  std::vector<double> v;
  v.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) v.push_back(t.number(r, name));
  return v;
}

std::string plot_trajectory(const CsvTable& t) {
  const auto xs = column(t, "x"), ys = column(t, "y");
  Canvas c("Ego trajectory", range_of(xs), range_of(ys), true);
  c.axes("x [m]", "y [m]");
  c.polyline(xs, ys, kPalette[0]);
  c.legend("path", kPalette[0]);
  const std::size_t ec = t.column("event");
  bool any = false;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string& e = t.rows[r][ec];
    if (e.empty()) continue;
    c.marker(xs[r], ys[r], kPalette[3], e);
    any = true;
  }
  if (any) c.legend("event", kPalette[3]);
  return c.str();
}

std::string plot_speed(const CsvTable& t) {
  const auto ts = column(t, "t"), vs = column(t, "v");
  Canvas c("Speed profile", range_of(ts), merge(range_of(vs), {0.0, 0.0}));
  c.axes("time [s]", "speed [m/s]");
  c.polyline(ts, vs, kPalette[0]);
  c.legend("v", kPalette[0]);
  return c.str();
}

std::string plot_steering(const CsvTable& t) {
  const auto ts = column(t, "t"), ds = column(t, "delta"), us = column(t, "u_delta");
  Canvas c("Steering profile", range_of(ts), merge(merge(range_of(ds), range_of(us)), {0.0, 0.0}));
  c.axes("time [s]", "steering: delta [rad], u_delta [normalized]");
  c.polyline(ts, ds, kPalette[0]);
  c.polyline(ts, us, kPalette[1], "4 3");
  c.legend("delta [rad]", kPalette[0]);
  c.legend("u_delta [-]", kPalette[1]);
  return c.str();
}

std::string plot_latency(const CsvTable& t) {
  const auto cycles = column(t, "cycle");
  std::vector<std::vector<double>> stages;
  for (auto name : kStageNames) stages.push_back(column(t, name));
  double top = kLatencyBudgetMs;
  for (std::size_t r = 0; r < cycles.size(); ++r) {
    double sum = 0.0;
    for (const auto& s : stages) sum += std::max(s[r], 0.0);
    top = std::max(top, sum);
  }
  Range xr = range_of(cycles);
  xr.hi += 1.0;
  Canvas c("Per-stage cycle latency", xr, {0.0, top});
  c.axes("cycle [-]", "latency [ms]");
  for (std::size_t r = 0; r < cycles.size(); ++r) {
    double base = 0.0;
    for (std::size_t k = 0; k < stages.size(); ++k) {
      const double h = std::max(stages[k][r], 0.0);
      if (h > 0.0) c.rect(cycles[r], base, cycles[r] + 0.8, base + h, kPalette[k]);
      base += h;
    }
  }
  c.hline(kLatencyBudgetMs, "#d62728", "50 ms budget");
  for (std::size_t k = 0; k < kStageNames.size(); ++k) c.legend(kStageNames[k], kPalette[k]);
  return c.str();
}

std::string plot_bound_slack(const CsvTable& t) {
  const auto slack = column(t, "slack");
  const std::size_t cc = t.column("check"), vc = t.column("violated");
  std::vector<double> idx(slack.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<double>(i);
  Canvas c("Bound slack per instance", range_of(idx), merge(range_of(slack), {0.0, 0.0}));
  c.axes("report row [-]", "slack = bound - measured [check units]");
  std::map<std::string, std::size_t> colors;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto [it, inserted] = colors.emplace(t.rows[r][cc], colors.size());
    if (inserted) c.legend(it->first, kPalette[it->second % (kPalette.size() - 1)]);
    const bool violated = t.rows[r][vc] == "1" || t.rows[r][vc] == "true";
    c.marker(idx[r], slack[r], violated ? "#000" : kPalette[it->second % (kPalette.size() - 1)],
             violated ? "violated" : "");
  }
  c.hline(0.0, "#000", "zero slack");
  return c.str();
}

std::string plot_iou(const CsvTable& t) {
  t.column("channel");
  const std::size_t ic = t.column("iou");
  std::map<int, std::pair<std::vector<double>, std::vector<double>>> series;
  Range xr{1e300, -1e300};
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double frame = t.number(r, "frame");
    xr = merge(xr, {frame, frame});
    if (t.rows[r][ic].empty() || t.rows[r][ic] == "empty") continue;  // both masks empty
    auto& s = series[static_cast<int>(t.number(r, "channel"))];
    s.first.push_back(frame);
    s.second.push_back(t.number(r, "iou"));
  }
  Canvas c("Per-channel IoU over frames", xr, {0.0, 1.0});
  c.axes("frame [-]", "IoU [-]");
  std::size_t k = 0;
  for (const auto& [ch, s] : series) {
    const auto color = kPalette[k++ % kPalette.size()];
    c.polyline(s.first, s.second, color);
    c.legend("channel " + std::to_string(ch), color);
  }
  return c.str();
}

}  // namespace

std::string_view plot_kind_name(PlotKind k) {
  switch (k) {
    case PlotKind::trajectory: return "trajectory";
    case PlotKind::speed_profile: return "speed_profile";
    case PlotKind::steering_profile: return "steering_profile";
    case PlotKind::latency: return "latency";
    case PlotKind::bound_slack: return "bound_slack";
    case PlotKind::iou_timeline: return "iou_timeline";
  }
  return "?";
}

PlotKind parse_plot_kind(std::string_view name) {
  for (auto k : {PlotKind::trajectory, PlotKind::speed_profile, PlotKind::steering_profile, PlotKind::latency,
                 PlotKind::bound_slack, PlotKind::iou_timeline})
    if (plot_kind_name(k) == name) return k;
  throw std::invalid_argument("unknown plot kind '" + std::string(name) +
                              "' (expected trajectory, speed_profile, steering_profile, latency, bound_slack or "
                              "iou_timeline)");
}

std::string render_plot(const CsvTable& table, PlotKind kind) {
  if (table.rows.empty()) throw std::invalid_argument("CSV has no data rows");
  switch (kind) {
    case PlotKind::trajectory: return plot_trajectory(table);
    case PlotKind::speed_profile: return plot_speed(table);
    case PlotKind::steering_profile: return plot_steering(table);
    case PlotKind::latency: return plot_latency(table);
    case PlotKind::bound_slack: return plot_bound_slack(table);
    case PlotKind::iou_timeline: return plot_iou(table);
  }
  throw std::invalid_argument("plot: unknown kind");
}

}  // namespace bevbridge
