// Copyright 2026 The dynrollout Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dynrollout/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace dynrollout {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
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

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace

std::vector<PlotSeries> load_series(std::istream& csv, const PlotSpec& spec) {
  std::string line;
  if (!std::getline(csv, line)) throw std::invalid_argument("plot: empty results file");
  const auto header = split_csv(line);
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::invalid_argument("plot: no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_step = column("step");
  const std::size_t c50 = column("p50");
  const std::size_t c65 = column("p65");
  const std::size_t c95 = column("p95");
  std::vector<std::pair<std::size_t, std::string>> filters;
  for (const auto& [k, v] : spec.filters) filters.emplace_back(column(k), v);
  std::vector<std::size_t> keys;
  for (const auto& k : spec.series_by) keys.push_back(column(k));

  std::vector<PlotSeries> series;
  std::size_t lineno = 1;
  while (std::getline(csv, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != header.size()) {
      throw std::invalid_argument("plot: line " + std::to_string(lineno) + " has " +
                                  std::to_string(f.size()) + " fields, expected " +
                                  std::to_string(header.size()));
    }
    bool keep = true;
    for (const auto& [c, v] : filters) keep = keep && f[c] == v;
    if (!keep) continue;
    std::string label;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (f[keys[i]].empty()) continue;
      if (!label.empty()) label += ' ';
      label += spec.series_by[i] + "=" + f[keys[i]];
    }
    auto it = std::find_if(series.begin(), series.end(),
                           [&](const PlotSeries& s) { return s.label == label; });
    if (it == series.end()) {
      series.push_back({label, {}, {}, {}, {}});
      it = series.end() - 1;
    }
    try {
      it->step.push_back(std::stod(f[c_step]));
      it->p50.push_back(std::stod(f[c50]));
      it->p65.push_back(std::stod(f[c65]));
      it->p95.push_back(std::stod(f[c95]));
    } catch (const std::exception&) {
      throw std::invalid_argument("plot: line " + std::to_string(lineno) + " is not numeric");
    }
  }
  return series;
}

std::string render_svg(const std::vector<PlotSeries>& series, const PlotSpec& spec) {
  const double w = spec.width;
  const double h = spec.height;
  const double left = 80, right = 200, top = 40, bottom = 60;
  const double pw = w - left - right;
  const double ph = h - top - bottom;

  double x_lo = std::numeric_limits<double>::infinity();
  double x_hi = -x_lo;
  double y_lo = x_lo;
  double y_hi = -x_lo;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.step.size(); ++i) {
      x_lo = std::min(x_lo, s.step[i]);
      x_hi = std::max(x_hi, s.step[i]);
      for (double v : {s.p50[i], s.p65[i], s.p95[i]}) {
        if (!std::isfinite(v) || (spec.log_y && v <= 0.0)) continue;
        y_lo = std::min(y_lo, v);
        y_hi = std::max(y_hi, v);
      }
    }
  }
  if (!std::isfinite(x_lo)) x_lo = x_hi = 0.0;
  if (x_hi == x_lo) {
    x_lo -= 1.0;
    x_hi += 1.0;
  }
  if (!std::isfinite(y_lo)) y_lo = y_hi = 1.0;
  auto ty = [&](double v) { return spec.log_y ? std::log10(v) : v; };
  double ty_lo = spec.log_y ? std::floor(ty(y_lo)) : y_lo;
  double ty_hi = spec.log_y ? std::ceil(ty(y_hi)) : y_hi;
  if (ty_hi <= ty_lo) ty_hi = ty_lo + 1.0;
  const double floor_value = spec.log_y ? std::pow(10.0, ty_lo) : ty_lo;

  auto px = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * pw; };
  auto py = [&](double y) {
    if (!std::isfinite(y) || (spec.log_y && y <= 0.0)) y = floor_value;
    const double t = std::clamp((ty(y) - ty_lo) / (ty_hi - ty_lo), 0.0, 1.0);
    return top + (1.0 - t) * ph;
  };

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << spec.width << "\" height=\""
     << spec.height << "\" viewBox=\"0 0 " << spec.width << ' ' << spec.height << "\">\n"
     << "<defs><clipPath id=\"plot-area\"><rect x=\"" << num(left) << "\" y=\"" << num(top)
     << "\" width=\"" << num(pw) << "\" height=\"" << num(ph) << "\"/></clipPath></defs>\n"
     << "<rect x=\"0\" y=\"0\" width=\"" << spec.width << "\" height=\"" << spec.height
     << "\" fill=\"white\"/>\n";
  if (!spec.title.empty()) {
    os << "<text x=\"" << num(left + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" "
       << "font-family=\"sans-serif\" font-size=\"16\">" << escape(spec.title) << "</text>\n";
  }

  // Axes and ticks.
  os << "<g stroke=\"black\" stroke-width=\"1\" fill=\"none\">\n"
     << "<line x1=\"" << num(left) << "\" y1=\"" << num(top + ph) << "\" x2=\"" << num(left + pw)
     << "\" y2=\"" << num(top + ph) << "\"/>\n"
     << "<line x1=\"" << num(left) << "\" y1=\"" << num(top) << "\" x2=\"" << num(left)
     << "\" y2=\"" << num(top + ph) << "\"/>\n</g>\n";
  os << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  const int y_ticks = spec.log_y ? static_cast<int>(ty_hi - ty_lo) : 5;
  const int y_stride = std::max(1, y_ticks / 8);
  for (int k = 0; k <= y_ticks; k += y_stride) {
    const double tv = ty_lo + (ty_hi - ty_lo) * k / std::max(1, y_ticks);
    const double y = top + (1.0 - (tv - ty_lo) / (ty_hi - ty_lo)) * ph;
    char label[32];
    if (spec.log_y) std::snprintf(label, sizeof(label), "1e%d", static_cast<int>(std::lround(tv)));
    else std::snprintf(label, sizeof(label), "%.3g", tv);
    os << "<line x1=\"" << num(left - 4) << "\" y1=\"" << num(y) << "\" x2=\"" << num(left)
       << "\" y2=\"" << num(y) << "\" stroke=\"black\"/>\n"
       << "<text x=\"" << num(left - 6) << "\" y=\"" << num(y + 4)
       << "\" text-anchor=\"end\">" << label << "</text>\n";
  }
  for (int k = 0; k <= 5; ++k) {
    const double xv = x_lo + (x_hi - x_lo) * k / 5.0;
    const double x = px(xv);
    char label[32];
    std::snprintf(label, sizeof(label), "%g", std::round(xv * 100.0) / 100.0);
    os << "<line x1=\"" << num(x) << "\" y1=\"" << num(top + ph) << "\" x2=\"" << num(x)
       << "\" y2=\"" << num(top + ph + 4) << "\" stroke=\"black\"/>\n"
       << "<text x=\"" << num(x) << "\" y=\"" << num(top + ph + 18)
       << "\" text-anchor=\"middle\">" << label << "</text>\n";
  }
  os << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(h - 16)
     << "\" text-anchor=\"middle\" font-size=\"13\">step</text>\n"
     << "<text x=\"18\" y=\"" << num(top + ph / 2) << "\" text-anchor=\"middle\" font-size=\"13\" "
     << "transform=\"rotate(-90 18 " << num(top + ph / 2) << ")\">per-step MSE</text>\n</g>\n";

  os << "<g clip-path=\"url(#plot-area)\">\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    const PlotSeries& s = series[si];
    const char* color = kPalette[si % std::size(kPalette)];
    if (s.step.size() == 1) {
      os << "<circle cx=\"" << num(px(s.step[0])) << "\" cy=\"" << num(py(s.p50[0]))
         << "\" r=\"4\" fill=\"" << color << "\"/>\n";
      continue;
    }
    auto band = [&](const std::vector<double>& upper, double opacity) {
      os << "<polygon fill=\"" << color << "\" fill-opacity=\"" << opacity
         << "\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < s.step.size(); ++i) {
        os << num(px(s.step[i])) << ',' << num(py(upper[i])) << ' ';
      }
      for (std::size_t i = s.step.size(); i-- > 0;) {
        os << num(px(s.step[i])) << ',' << num(py(s.p50[i])) << (i ? " " : "");
      }
      os << "\"/>\n";
    };
    band(s.p95, 0.12);
    band(s.p65, 0.25);
    os << "<path fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" d=\"";
    for (std::size_t i = 0; i < s.step.size(); ++i) {
      os << (i ? " L" : "M") << num(px(s.step[i])) << ',' << num(py(s.p50[i]));
    }
    os << "\"/>\n";
  }
  os << "</g>\n";

  os << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    const double y = top + 10 + 18.0 * static_cast<double>(si);
    const double x = left + pw + 14;
    os << "<rect x=\"" << num(x) << "\" y=\"" << num(y - 8) << "\" width=\"12\" height=\"10\" fill=\""
       << kPalette[si % std::size(kPalette)] << "\"/>\n"
       << "<text x=\"" << num(x + 18) << "\" y=\"" << num(y + 1) << "\">"
       << escape(series[si].label) << "</text>\n";
  }
  os << "</g>\n</svg>\n";
  return os.str();
}

void emit_plot(const std::filesystem::path& results_csv, const PlotSpec& spec,
               const std::filesystem::path& out) {
  std::ifstream is(results_csv);
  if (!is) throw std::runtime_error("plot: cannot open " + results_csv.string());
  const auto series = load_series(is, spec);
  std::vector<std::string> missing;
  for (const auto& want : spec.required_series) {
    if (std::none_of(series.begin(), series.end(),
                     [&](const PlotSeries& s) { return s.label == want; })) {
      missing.push_back(want);
    }
  }
  if (!missing.empty()) {
    std::string msg = "plot: missing series:";
    for (const auto& m : missing) msg += " [" + m + "]";
    throw std::invalid_argument(msg);
  }
  if (series.empty()) throw std::invalid_argument("plot: no rows match the requested filters");
  const std::string svg = render_svg(series, spec);
  std::filesystem::path tmp = out;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("plot: cannot write " + tmp.string());
    os << svg;
    if (!os) {
      os.close();
      std::filesystem::remove(tmp);
      throw std::runtime_error("plot: write failed for " + out.string());
    }
  }
  std::filesystem::rename(tmp, out);
}

}  // namespace dynrollout
