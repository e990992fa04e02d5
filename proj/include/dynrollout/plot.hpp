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

// Standalone SVG rendering of per-step error curves from a results CSV.

#ifndef DYNROLLOUT_PLOT_HPP_
#define DYNROLLOUT_PLOT_HPP_

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace dynrollout {

struct PlotSpec {
  std::string title;
  // Keep only rows whose column equals the given value.
  std::map<std::string, std::string> filters;
  // Columns whose values identify a series; the legend shows them.
  std::vector<std::string> series_by = {"model", "pole"};
  // Series labels that must be present, e.g. "model=D pole=0.5".
  std::vector<std::string> required_series;
  bool log_y = true;
  int width = 800;
  int height = 500;
};

struct PlotSeries {
  std::string label;
  std::vector<double> step;
  std::vector<double> p50;
  std::vector<double> p65;
  std::vector<double> p95;
};

std::vector<PlotSeries> load_series(std::istream& csv, const PlotSpec& spec);

// Median line with p50-p65 and p50-p95 bands per series; single-point
// series become markers.
std::string render_svg(const std::vector<PlotSeries>& series, const PlotSpec& spec);

// Throws without touching `out` when a required series is missing or no
// rows match.
void emit_plot(const std::filesystem::path& results_csv, const PlotSpec& spec,
               const std::filesystem::path& out);

}  // namespace dynrollout

#endif  // DYNROLLOUT_PLOT_HPP_
