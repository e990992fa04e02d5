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

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <filesystem>
#include <optional>
#include <sstream>

#include "dynrollout/selftest.hpp"
#include "dynrollout/sweep.hpp"

namespace py = pybind11;
namespace dr = dynrollout;

namespace {

// A preset name, a path to a config file, or config text.
dr::SweepConfig resolve(const std::string& target, bool full) {
  if (target.find('=') != std::string::npos) {
    std::istringstream is(target);
    return dr::SweepConfig::parse(is);
  }
  if (std::filesystem::is_regular_file(target)) return dr::SweepConfig::parse_file(target);
  return dr::preset(target, full);
}

py::array_t<double> profile_array(const dr::ErrorProfile& p) {
  py::array_t<double> out({static_cast<py::ssize_t>(p.horizon()), py::ssize_t{3}});
  auto v = out.mutable_unchecked<2>();
  for (std::size_t t = 0; t < p.horizon(); ++t) {
    v(t, 0) = p.per_step[t].p50;
    v(t, 1) = p.per_step[t].p65;
    v(t, 2) = p.per_step[t].p95;
  }
  return out;
}

py::array_t<double> states_array(const std::vector<dr::Trajectory>& trajs) {
  const std::size_t n = trajs.size();
  const std::size_t len = n ? trajs.front().states.size() : 0;
  const std::size_t dim = len ? trajs.front().states.front().size() : 0;
  py::array_t<double> out(
      {static_cast<py::ssize_t>(n), static_cast<py::ssize_t>(len), static_cast<py::ssize_t>(dim)});
  auto v = out.mutable_unchecked<3>();
  for (std::size_t i = 0; i < n; ++i) {
    if (trajs[i].states.size() != len) {
      throw std::runtime_error("trajectory " + std::to_string(i) +
                               " diverged and was truncated; use a stable pole");
    }
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t d = 0; d < dim; ++d) v(i, t, d) = trajs[i].states[t][d];
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_dynrollout, m) {
  m.doc() = "Rollout error experiments for learned one-step dynamics models";
  m.attr("__version__") = dr::kToolVersion;

  m.def("preset_names", &dr::preset_names);

  m.def(
      "config_text",
      [](const std::string& target, bool full) { return resolve(target, full).canonical(); },
      py::arg("target"), py::arg("full") = false,
      "Canonical config text of a preset name, config file or config text.");

  m.def(
      "selftest",
      [](std::uint64_t seed) {
        std::ostringstream os;
        const bool ok = dr::run_selftest(os, seed);
        return py::make_tuple(ok, os.str());
      },
      py::arg("seed") = 1);

  m.def(
      "run_sweep",
      [](const std::string& target, const std::filesystem::path& out, std::optional<std::uint64_t> seed,
         std::size_t workers, bool full, std::vector<std::size_t> cells) {
        dr::SweepConfig cfg = resolve(target, full);
        if (seed) cfg.root_seed = *seed;
        dr::RunOptions opts;
        opts.out_dir = out;
        opts.workers = workers;
        opts.only_cells = std::move(cells);
        dr::RunManifest manifest;
        {
          py::gil_scoped_release release;
          manifest = dr::run_sweep(cfg, opts);
        }
        py::list failed;
        for (const auto& c : manifest.cells) {
          if (!c.error.empty()) failed.append(py::make_tuple(c.cell.index, c.error));
        }
        py::dict d;
        d["experiment"] = manifest.experiment;
        d["cell_count"] = manifest.cell_count;
        d["all_succeeded"] = manifest.all_succeeded();
        d["failed"] = failed;
        d["artifacts"] = manifest.artifacts;
        d["wall_seconds"] = manifest.wall_seconds;
        return d;
      },
      py::arg("target"), py::arg("out"), py::arg("seed") = py::none(), py::arg("workers") = 1,
      py::arg("full") = false, py::arg("cells") = std::vector<std::size_t>{},
      "Runs a sweep and returns a summary of its manifest.");

  m.def(
      "run_cell",
      [](const std::string& target, std::size_t index, bool full) {
        const dr::SweepConfig cfg = resolve(target, full);
        cfg.validate();
        const auto cells = dr::enumerate_cells(cfg);
        if (index >= cells.size()) throw py::index_error("cell index out of range");
        dr::ErrorProfile p;
        {
          py::gil_scoped_release release;
          p = dr::run_cell(cfg, cells[index]);
        }
        return profile_array(p);
      },
      py::arg("target"), py::arg("index"), py::arg("full") = false,
      "Per-step (p50, p65, p95) error of one sweep cell, shape (horizon, 3).");

  m.def(
      "data_table",
      [](const std::string& target) {
        const auto rows = dr::compute_data_table(resolve(target, false));
        py::list out;
        for (const auto& r : rows) {
          py::dict d;
          d["pole"] = r.pole;
          d["transient_decay"] = r.transient_decay ? py::cast(*r.transient_decay) : py::none();
          d["delta_mean"] = r.delta_mean;
          d["delta_std"] = r.delta_std;
          d["state_mean"] = r.state_mean;
          d["state_std"] = r.state_std;
          out.append(d);
        }
        return out;
      },
      py::arg("target") = "data_table");

  m.def(
      "snr_table",
      [](const std::string& target) {
        std::vector<std::pair<double, double>> out;
        for (const auto& r : dr::compute_snr_table(resolve(target, false)))
          out.emplace_back(r.dt, r.snr);
        return out;
      },
      py::arg("target") = "snr");

  m.def(
      "generate_state_space",
      [](double pole, std::size_t dim, double noise, bool regularized, bool inputs,
         std::size_t n, std::size_t horizon, std::uint64_t seed) {
        dr::Rng rng(seed);
        const auto proto = dr::sample_state_space(pole, dim, noise, regularized, !inputs, rng);
        return states_array(
            dr::generate_dataset(proto, dr::RandomUniformPolicy{}, n, horizon, rng, true));
      },
      py::arg("pole"), py::arg("dim") = 3, py::arg("noise") = 1.0, py::arg("regularized") = false,
      py::arg("inputs") = false, py::arg("n") = 10, py::arg("horizon") = 100,
      py::arg("seed") = 1, "States of sampled trajectories, shape (n, horizon + 1, dim).");

  m.def(
      "generate_lorenz",
      [](double lo, double hi, std::size_t n, std::size_t horizon, std::uint64_t seed) {
        dr::Rng rng(seed);
        return states_array(
            dr::generate_lorenz_dataset(lo, hi, n, horizon, dr::LorenzParams{}, rng));
      },
      py::arg("lo") = 5.0, py::arg("hi") = 10.0, py::arg("n") = 10, py::arg("horizon") = 200,
      py::arg("seed") = 1);

  m.def(
      "transient_decay_steps",
      [](double pole, std::vector<double> s0) -> std::optional<std::size_t> {
        dr::LinearSystem sys;
        sys.dim = s0.size();
        sys.a = dr::Matrix(s0.size(), s0.size());
        for (std::size_t i = 0; i < s0.size(); ++i) sys.a(i, i) = pole;
        sys.b = dr::Matrix(s0.size(), 1);
        sys.pole = pole;
        return dr::transient_decay_steps(sys, s0);
      },
      py::arg("pole"), py::arg("s0"),
      "Decay steps of a diagonal system; None when the transient does not decay.");
}
