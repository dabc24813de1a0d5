#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hetdqcd/tradeoff.hpp"

namespace hetdqcd {

inline constexpr std::string_view kCsvHeader =
    "rule,variant,M,gamma_target,h_star,arl_hat,arl_ci,edd_hat,edd_ci,trials,censored_frac,valid";

/// Locale-independent shortest-ish decimal; empty for NaN.
inline std::string format_number(double v, int precision = 10) {
  if (std::isnan(v)) return "";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, precision);
  return std::string(buf, r.ptr);
}

inline std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

inline void write_csv(std::ostream& os, std::span<const TradeoffPoint> points) {
  os << kCsvHeader << '\n';
  for (const auto& p : points) {
    os << csv_escape(p.rule) << ',' << variant_name(p.variant) << ',' << format_number(p.m) << ','
       << format_number(p.gamma_target) << ',' << format_number(p.h_star) << ',' << format_number(p.arl.mean) << ','
       << format_number(p.arl.ci_halfwidth) << ',' << format_number(p.edd.mean) << ','
       << format_number(p.edd.ci_halfwidth) << ',' << p.trials() << ',' << format_number(p.censored_fraction(), 6)
       << ',' << (p.valid() ? "true" : "false") << '\n';
  }
}

inline std::string to_csv(std::span<const TradeoffPoint> points) {
  std::ostringstream os;
  write_csv(os, points);
  return os.str();
}

namespace detail {

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

/// Round step (1, 2 or 5 times a power of ten) giving about `target` ticks.
inline double nice_step(double span, int target) {
  const double raw = span / std::max(target, 1);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double f : {1.0, 2.0, 5.0, 10.0})
    if (f * mag >= raw) return f * mag;
  return 10.0 * mag;
}

}  // namespace detail

/// Self-contained SVG of EDD against ARL (log axis), one curve per rule.
/// Invalid points are drawn hollow.
inline std::string render_svg(std::span<const TradeoffPoint> points, std::string_view title) {
  using detail::xml_escape;
  constexpr double W = 760, H = 500, left = 70, right = 230, top = 40, bottom = 60;
  const double pw = W - left - right;
  const double ph = H - top - bottom;

  std::vector<std::string> order;
  std::map<std::string, std::vector<const TradeoffPoint*>> curves;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymax = 0.0;
  for (const auto& p : points) {
    if (!curves.count(p.rule)) order.push_back(p.rule);
    curves[p.rule].push_back(&p);
    if (p.arl.mean > 0 && p.edd.mean > 0 && std::isfinite(p.arl.mean) && std::isfinite(p.edd.mean)) {
      xmin = std::min(xmin, std::log10(p.arl.mean));
      xmax = std::max(xmax, std::log10(p.arl.mean));
      ymax = std::max(ymax, p.edd.mean + (std::isfinite(p.edd.ci_halfwidth) ? p.edd.ci_halfwidth : 0.0));
    }
  }
  if (!std::isfinite(xmin)) {
    xmin = 1;
    xmax = 2;
    ymax = 1;
  }
  xmin = std::floor(xmin);
  xmax = std::max(std::ceil(xmax), xmin + 1);
  const double ystep = detail::nice_step(ymax, 6);
  ymax = std::max(ystep, std::ceil(ymax / ystep) * ystep);
  auto sx = [&](double arl) { return left + (std::log10(arl) - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double edd) { return top + ph - edd / ymax * ph; };

  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  std::ostringstream os;
  auto num = [](double v) { return format_number(v, 6); };
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << left + pw / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title)
     << "</text>\n";
  // Grid and ticks.
  for (double d = xmin; d <= xmax + 1e-9; d += 1.0) {
    const double x = sx(std::pow(10.0, d));
    os << "<line x1=\"" << num(x) << "\" y1=\"" << top << "\" x2=\"" << num(x) << "\" y2=\"" << top + ph
       << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << num(x) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">1e" << num(d)
       << "</text>\n";
    for (int k = 2; k <= 9 && d < xmax; ++k) {
      const double xm = sx(k * std::pow(10.0, d));
      os << "<line x1=\"" << num(xm) << "\" y1=\"" << top + ph << "\" x2=\"" << num(xm) << "\" y2=\"" << top + ph - 4
         << "\" stroke=\"#999\"/>\n";
    }
  }
  for (double v = 0; v <= ymax + 1e-9; v += ystep) {
    const double y = sy(v);
    os << "<line x1=\"" << left << "\" y1=\"" << num(y) << "\" x2=\"" << left + pw << "\" y2=\"" << num(y)
       << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << left - 6 << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">" << num(v) << "</text>\n";
  }
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 18 << "\" text-anchor=\"middle\">ARL (log scale)</text>\n";
  os << "<text transform=\"translate(18," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">EDD</text>\n";

  for (std::size_t c = 0; c < order.size(); ++c) {
    const char* color = kColors[c % std::size(kColors)];
    auto pts = curves[order[c]];
    std::stable_sort(pts.begin(), pts.end(), [](auto a, auto b) { return a->gamma_target < b->gamma_target; });
    std::string poly;
    for (auto p : pts) {
      if (!(p->arl.mean > 0) || !std::isfinite(p->edd.mean)) continue;
      poly += num(sx(p->arl.mean)) + "," + num(sy(p->edd.mean)) + " ";
    }
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << poly << "\"/>\n";
    for (auto p : pts) {
      if (!(p->arl.mean > 0) || !std::isfinite(p->edd.mean)) continue;
      const double x = sx(p->arl.mean), y = sy(p->edd.mean);
      if (std::isfinite(p->edd.ci_halfwidth) && p->edd.ci_halfwidth > 0)
        os << "<line x1=\"" << num(x) << "\" y1=\"" << num(sy(p->edd.mean - p->edd.ci_halfwidth)) << "\" x2=\""
           << num(x) << "\" y2=\"" << num(sy(p->edd.mean + p->edd.ci_halfwidth)) << "\" stroke=\"" << color
           << "\"/>\n";
      os << "<circle cx=\"" << num(x) << "\" cy=\"" << num(y) << "\" r=\"3\" stroke=\"" << color << "\" fill=\""
         << (p->valid() ? color : "white") << "\"/>\n";
    }
    const double ly = top + 10 + 18.0 * static_cast<double>(c);
    os << "<line x1=\"" << left + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 32 << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << left + pw + 38 << "\" y=\"" << ly + 4 << "\">" << xml_escape(order[c]) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace hetdqcd
