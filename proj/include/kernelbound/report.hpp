#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "hypotheses.hpp"
#include "verify.hpp"

namespace kernelbound {

namespace report_detail {

inline std::string num(double v, int prec = 6) {
  std::ostringstream os;
  os << std::setprecision(prec) << (v == 0.0 ? 0.0 : v);
  return os.str();
}

// Coordinates joined with ';' so that CSV columns stay fixed.
inline std::string csv_point(const Vec& p) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (Eigen::Index i = 0; i < p.size(); ++i) os << (i ? ";" : "") << p[i];
  return os.str();
}

inline std::string csv_num(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace report_detail

inline void write_hypothesis_report(std::ostream& os, const HypothesisReport& rep) {
  os << "report " << rep.id << ": " << to_string(rep.status) << "\n";
  if (rep.witness) os << "first failing margin: " << *rep.witness << "\n";
  os << "M = " << rep.M << ", M* = " << rep.M_star << "\n\n";
  os << std::left << std::setw(12) << "group" << std::setw(28) << "margin" << std::setw(16) << "slack"
     << "ok\n";
  for (const auto& mg : rep.margins)
    os << std::left << std::setw(12) << mg.group << std::setw(28) << mg.id << std::setw(16)
       << report_detail::num(mg.slack) << (mg.ok() ? "yes" : "NO") << "\n";
}

inline void write_summary(std::ostream& os, const std::vector<CheckResult>& results, const std::string& title,
                          const std::string& config_fingerprint) {
  os << "# " << title << "\n\n";
  os << "config fingerprint: " << config_fingerprint << "\n\n";
  os << "| check | status | worst | tolerance | location | fingerprint |\n";
  os << "|---|---|---|---|---|---|\n";
  int passed = 0;
  for (const auto& r : results) {
    passed += r.passed();
    os << "| " << r.id << " | " << to_string(r.status) << " | " << report_detail::num(r.worst) << " | "
       << report_detail::num(r.tolerance) << " | " << r.where.describe() << " | " << r.fingerprint << " |\n";
  }
  os << "\n" << passed << " of " << results.size() << " checks passed\n";
  for (const auto& r : results) {
    if (r.note.empty() && r.parameters.empty()) continue;
    os << "\n" << r.id << ":";
    for (const auto& [k, v] : r.parameters) os << " " << k << "=" << report_detail::num(v, 12);
    if (!r.note.empty()) os << "\n  " << r.note;
    os << "\n";
  }
}

inline void write_csv(std::ostream& os, const std::vector<CheckResult>& results) {
  using report_detail::csv_num;
  using report_detail::csv_point;
  os << "check,label,t,x,y,h,k,mesh,R,value,limit\n";
  for (const auto& r : results)
    for (const auto& row : r.rows) {
      const auto& a = row.at;
      os << r.id << "," << row.label << "," << csv_num(a.t) << "," << csv_point(a.x) << "," << csv_point(a.y) << ","
         << (a.h >= 0 ? std::to_string(a.h + 1) : "") << "," << (a.k >= 0 ? std::to_string(a.k + 1) : "") << ","
         << csv_num(a.mesh) << "," << csv_num(a.radius) << "," << csv_num(row.value) << "," << csv_num(row.limit)
         << "\n";
    }
}

struct SvgSeries {
  std::string name;
  std::vector<double> x, y;
};

struct SvgPlot {
  std::string title, xlabel, ylabel;
  bool log_y = false;
  std::vector<SvgSeries> series;
};

inline void write_svg(std::ostream& os, const SvgPlot& plot) {
  const double W = 640, H = 420, L = 70, R = 160, T = 40, B = 50;
  const double inf = std::numeric_limits<double>::infinity();
  double x0 = inf, x1 = -inf, y0 = inf, y1 = -inf;
  auto ty = [&](double v) { return plot.log_y ? std::log10(v) : v; };
  for (const auto& s : plot.series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (plot.log_y && !(s.y[i] > 0)) continue;
      if (!std::isfinite(ty(s.y[i]))) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1;
  if (!std::isfinite(y0)) y0 = 0, y1 = 1;
  if (!(x1 > x0)) x1 = x0 + 1;
  if (!(y1 > y0)) y1 = y0 + 1;
  auto px = [&](double v) { return L + (v - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double v) { return H - B - (ty(v) - y0) / (y1 - y0) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << plot.title << "</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    const double yp = H - B - (H - T - B) * i / 4.0;
    os << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << report_detail::num(xv, 3)
       << "</text>\n";
    os << "<text x=\"" << L - 6 << "\" y=\"" << yp + 4 << "\" text-anchor=\"end\">"
       << (plot.log_y ? "1e" + report_detail::num(yv, 3) : report_detail::num(yv, 3)) << "</text>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << plot.xlabel
     << "</text>\n";
  os << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << (T + H - B) / 2 << ")\">" << plot.ylabel << "</text>\n";
  for (std::size_t s = 0; s < plot.series.size(); ++s) {
    const auto& ser = plot.series[s];
    const char* col = colors[s % 6];
    os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < ser.x.size(); ++i) {
      if (plot.log_y && !(ser.y[i] > 0)) continue;
      os << px(ser.x[i]) << "," << py(ser.y[i]) << " ";
    }
    os << "\"/>\n";
    const double ly = T + 16 * (s + 1);
    os << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly - 4 << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly - 4
       << "\" stroke=\"" << col << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << W - R + 34 << "\" y=\"" << ly << "\">" << ser.name << "</text>\n";
  }
  os << "</svg>\n";
}

// Polyline of each component of a kernel field along the first axis (d = 2 takes the row through the source).
inline SvgPlot kernel_section_plot(const KernelField& kf, const std::string& title) {
  SvgPlot plot{title, "x", "p", true, {}};
  const GridSpec& g = kf.grid();
  const Vec src = g.coord(kf.source_node);
  for (int h = 0; h < kf.field.m; ++h) {
    SvgSeries s{"component " + std::to_string(h + 1), {}, {}};
    for (std::size_t i = 0; i < g.nodes(); ++i) {
      const Vec x = g.coord(i);
      if (g.d == 2 && x[1] != src[1]) continue;
      s.x.push_back(x[0]);
      s.y.push_back(kf(h, i));
    }
    plot.series.push_back(std::move(s));
  }
  return plot;
}

}  // namespace kernelbound
