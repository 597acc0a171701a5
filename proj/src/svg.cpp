#include "steerode/svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "steerode/csv.hpp"
#include "steerode/errors.hpp"

namespace steerode {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                    "#9467bd", "#ff7f0e", "#8c564b",
                                    "#17becf", "#7f7f7f"};
constexpr int kPaletteSize = 8;

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  bool ok() const { return lo <= hi; }
};

// Tick spacing of 1, 2 or 5 times a power of ten, aiming for ~5 ticks.
double nice_step(double span) {
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double norm = raw / mag;
  if (norm <= 1.5) return mag;
  if (norm <= 3.5) return 2.0 * mag;
  if (norm <= 7.5) return 5.0 * mag;
  return 10.0 * mag;
}

std::vector<double> ticks_for(const Range& r) {
  const double step = nice_step(r.hi - r.lo);
  std::vector<double> out;
  double t = std::ceil(r.lo / step - 1e-9) * step;
  for (; t <= r.hi + 1e-9 * step; t += step) {
    if (std::abs(t) < 1e-12 * step) t = 0.0;
    out.push_back(t);
  }
  return out;
}

// Short human label: fixed for moderate magnitudes, scientific otherwise.
std::string tick_label(double v) {
  const double a = std::abs(v);
  char buf[48];
  if (v == 0.0) return "0";
  if (a >= 1e-3 && a < 1e5)
    std::snprintf(buf, sizeof buf, "%.6g", v);
  else
    std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string render_line_chart(const std::vector<SvgSeries>& series,
                              const SvgOptions& opt) {
  if (series.empty())
    throw ContractError("svg: at least one series is required");

  Range xr, yr;
  std::size_t finite_points = 0;
  for (const SvgSeries& s : series) {
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      if (opt.log_y && y <= 0.0)
        throw ConfigError("svg: log-scale y axis requires positive values; "
                          "got " + format_double(y) + " in series '" +
                          s.label + "'");
      xr.add(x);
      yr.add(opt.log_y ? std::log10(y) : y);
      ++finite_points;
    }
  }
  if (finite_points == 0)
    throw ContractError("svg: no finite data points to draw");
  if (xr.hi - xr.lo < 1e-12) {
    xr.lo -= 0.5;
    xr.hi += 0.5;
  }
  if (yr.hi - yr.lo < 1e-12) {
    yr.lo -= 0.5;
    yr.hi += 0.5;
  }

  const double ml = 70.0, mr = 18.0, mt = opt.title.empty() ? 18.0 : 40.0,
               mb = 52.0;
  const double pw = opt.width - ml - mr;
  const double ph = opt.height - mt - mb;
  const auto px = [&](double x) {
    return ml + pw * (x - xr.lo) / (xr.hi - xr.lo);
  };
  const auto py = [&](double y) {
    const double v = opt.log_y ? std::log10(y) : y;
    return mt + ph * (1.0 - (v - yr.lo) / (yr.hi - yr.lo));
  };

  std::ostringstream svg;
  svg << "<!--\n";
  for (const auto& [k, v] : opt.meta) svg << "  " << k << " = " << v << "\n";
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(opt.config_hash));
  svg << "  render_stamp = " << hash
      << " (derived from the config, not the clock)\n-->\n";
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width
      << "\" height=\"" << opt.height << "\" viewBox=\"0 0 " << opt.width
      << " " << opt.height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  if (!opt.title.empty())
    svg << "<text x=\"" << coord(ml + pw / 2) << "\" y=\"22\" "
        << "text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"15\" font-weight=\"bold\">" << escape_xml(opt.title)
        << "</text>\n";

  // Gridlines and tick labels.
  svg << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
  for (const double t : ticks_for(xr)) {
    const double x = px(t);
    svg << "<line x1=\"" << coord(x) << "\" y1=\"" << coord(mt) << "\" x2=\""
        << coord(x) << "\" y2=\"" << coord(mt + ph)
        << "\" stroke=\"#ddd\" stroke-width=\"1\"/>\n";
    svg << "<text x=\"" << coord(x) << "\" y=\"" << coord(mt + ph + 16)
        << "\" text-anchor=\"middle\">" << tick_label(t) << "</text>\n";
  }
  for (const double t : ticks_for(yr)) {
    const double y = mt + ph * (1.0 - (t - yr.lo) / (yr.hi - yr.lo));
    const double value = opt.log_y ? std::pow(10.0, t) : t;
    svg << "<line x1=\"" << coord(ml) << "\" y1=\"" << coord(y) << "\" x2=\""
        << coord(ml + pw) << "\" y2=\"" << coord(y)
        << "\" stroke=\"#ddd\" stroke-width=\"1\"/>\n";
    svg << "<text x=\"" << coord(ml - 6) << "\" y=\"" << coord(y + 4)
        << "\" text-anchor=\"end\">" << tick_label(value) << "</text>\n";
  }
  svg << "</g>\n";

  // Axes.
  svg << "<rect x=\"" << coord(ml) << "\" y=\"" << coord(mt) << "\" width=\""
      << coord(pw) << "\" height=\"" << coord(ph)
      << "\" fill=\"none\" stroke=\"#444\" stroke-width=\"1\"/>\n";
  if (!opt.x_label.empty())
    svg << "<text x=\"" << coord(ml + pw / 2) << "\" y=\""
        << coord(opt.height - 12)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"12\">" << escape_xml(opt.x_label) << "</text>\n";
  if (!opt.y_label.empty())
    svg << "<text transform=\"translate(16," << coord(mt + ph / 2)
        << ") rotate(-90)\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"12\">"
        << escape_xml(opt.y_label) << "</text>\n";

  // Polylines, split on non-finite points.
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % kPaletteSize];
    std::string seg;
    const auto flush = [&]() {
      if (!seg.empty())
        svg << "<polyline points=\"" << seg
            << "\" fill=\"none\" stroke=\"" << color
            << "\" stroke-width=\"1.6\"/>\n";
      seg.clear();
    };
    for (const auto& [x, y] : series[i].points) {
      if (!std::isfinite(x) || !std::isfinite(y)) {
        flush();
        continue;
      }
      if (!seg.empty()) seg += ' ';
      seg += coord(px(x)) + ',' + coord(py(y));
    }
    flush();
  }

  // Legend.
  svg << "<g font-family=\"sans-serif\" font-size=\"12\">\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double ly = mt + 14.0 + 18.0 * static_cast<double>(i);
    const double lx = ml + pw - 150.0;
    svg << "<line x1=\"" << coord(lx) << "\" y1=\"" << coord(ly - 4)
        << "\" x2=\"" << coord(lx + 22) << "\" y2=\"" << coord(ly - 4)
        << "\" stroke=\"" << kPalette[i % kPaletteSize]
        << "\" stroke-width=\"2.5\"/>\n";
    svg << "<text x=\"" << coord(lx + 28) << "\" y=\"" << coord(ly) << "\">"
        << escape_xml(series[i].label) << "</text>\n";
  }
  svg << "</g>\n</svg>\n";
  return svg.str();
}

void emit_svg(const std::vector<SvgSeries>& series, const SvgOptions& opt,
              const std::filesystem::path& path) {
  write_text_file(path, render_line_chart(series, opt));
}

}  // namespace steerode
