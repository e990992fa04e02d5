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

// dynrollout: generate datasets, train and evaluate dynamics models, run
// sweeps and render their figures.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "dynrollout/plot.hpp"
#include "dynrollout/selftest.hpp"
#include "dynrollout/sweep.hpp"

namespace dr = dynrollout;

namespace {

std::vector<std::size_t> parse_widths(const std::string& s) {
  std::vector<std::size_t> out;
  if (s == "none") return out;
  std::stringstream ss(s);
  std::string w;
  while (std::getline(ss, w, 'x')) out.push_back(std::stoul(w));
  return out;
}

std::vector<dr::Trajectory> read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  return dr::read_trajectories_csv(is);
}

dr::SweepConfig resolve_config(const std::string& target, bool full) {
  if (std::filesystem::is_regular_file(target)) return dr::SweepConfig::parse_file(target);
  return dr::preset(target, full);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Long-horizon rollout error experiments for learned dynamics models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", dr::kToolVersion);

  std::uint64_t seed = 1;
  std::string out;
  std::size_t workers = 1;
  std::string preset_name;
  bool seed_given = false;

  // generate
  auto* gen = app.add_subcommand("generate", "Write a trajectory dataset as CSV");
  std::string system = "state_space";
  double pole = 0.5;
  double noise = 1.0;
  std::size_t dim = 3;
  bool regularized = false;
  bool inputs = false;
  std::size_t n_traj = 100;
  std::size_t horizon = 100;
  double lorenz_lo = 5.0;
  double lorenz_hi = 10.0;
  gen->add_option("--system", system, "state_space, lorenz or cartpole")
      ->check(CLI::IsMember({"state_space", "lorenz", "cartpole"}));
  gen->add_option("--pole", pole);
  gen->add_option("--noise", noise, "process noise multiplier");
  gen->add_option("--dim", dim)->check(CLI::PositiveNumber);
  gen->add_flag("--regularized", regularized);
  gen->add_flag("--inputs", inputs, "drive the state-space system with U(-1, 1) actions");
  gen->add_option("--n", n_traj)->check(CLI::PositiveNumber);
  gen->add_option("--horizon", horizon)->check(CLI::PositiveNumber);
  gen->add_option("--lorenz-lo", lorenz_lo);
  gen->add_option("--lorenz-hi", lorenz_hi);
  gen->add_option("--seed", seed);
  gen->add_option("--out", out, "output CSV")->required();

  // train
  auto* train = app.add_subcommand("train", "Train a dynamics model on a trajectory CSV");
  std::string data_path;
  std::string model_name = "D";
  std::string hidden = "256x256";
  std::size_t epochs = 20;
  std::size_t ensemble = 5;
  bool no_norm = false;
  train->add_option("--data", data_path)->required()->check(CLI::ExistingFile);
  train->add_option("--model", model_name, "ZERO, PERSIST, LIN, D, D-S, P, P-S, PE, PE-S, DE, DE-S");
  train->add_option("--hidden", hidden, "hidden widths such as 256x256");
  train->add_option("--epochs", epochs)->check(CLI::PositiveNumber);
  train->add_option("--ensemble", ensemble)->check(CLI::PositiveNumber);
  train->add_flag("--no-norm", no_norm);
  train->add_option("--seed", seed);
  train->add_option("--out", out, "model file")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Per-step error profile of a model on a test CSV");
  std::string model_path;
  std::string mode = "logged";
  eval->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data_path)->required()->check(CLI::ExistingFile);
  eval->add_option("--mode", mode)->check(CLI::IsMember({"logged", "recomputed", "one_step"}));
  eval->add_option("--seed", seed);
  eval->add_option("--out", out, "profile CSV (stdout when omitted)");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Run a preset or config file");
  std::string target;
  bool full = false;
  std::vector<std::size_t> only_cells;
  bool list = false;
  sweep->add_option("target", target, "preset name or config file");
  sweep->add_option("--preset", preset_name, "preset name");
  sweep->add_option("--seed", seed, "override the root seed")->each([&](const std::string&) {
    seed_given = true;
  });
  sweep->add_option("--out", out, "output directory (default results/<name>)");
  sweep->add_option("--workers", workers)->check(CLI::PositiveNumber);
  sweep->add_flag("--full", full, "100 training and 100 test trajectories");
  sweep->add_option("--cell", only_cells, "run only these cell indices");
  sweep->add_flag("--list-presets", list);

  // plot
  auto* plot = app.add_subcommand("plot", "Render a results CSV as SVG");
  std::string results;
  std::vector<std::string> filters;
  std::vector<std::string> series_by;
  std::vector<std::string> required;
  std::string title;
  bool linear = false;
  plot->add_option("--results", results)->required()->check(CLI::ExistingFile);
  plot->add_option("--filter", filters, "column=value");
  plot->add_option("--series", series_by, "columns that identify a series")->delimiter(',');
  plot->add_option("--require", required, "series label that must be present");
  plot->add_option("--title", title);
  plot->add_flag("--linear", linear, "linear y axis");
  plot->add_option("--out", out, "SVG path")->required();

  // report
  auto* report = app.add_subcommand("report", "Regenerate the data-statistics table");
  std::string config_path;
  report->add_option("--preset", preset_name, "table preset")->default_val("data_table");
  report->add_option("--config", config_path)->check(CLI::ExistingFile);
  report->add_option("--seed", seed)->each([&](const std::string&) { seed_given = true; });
  report->add_option("--out", out, "directory for table_data.csv and table_data.txt");

  // selftest
  auto* selftest = app.add_subcommand("selftest", "Run the built-in oracle and property checks");
  selftest->add_option("--seed", seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      dr::Rng rng(seed);
      std::vector<dr::Trajectory> trajs;
      if (system == "state_space") {
        const auto proto = dr::sample_state_space(pole, dim, noise, regularized, !inputs, rng);
        trajs = dr::generate_dataset(proto, dr::RandomUniformPolicy{}, n_traj, horizon, rng, true);
      } else if (system == "lorenz") {
        trajs = dr::generate_lorenz_dataset(lorenz_lo, lorenz_hi, n_traj, horizon,
                                            dr::LorenzParams{}, rng);
      } else {
        trajs = dr::generate_cartpole_dataset(dr::Cartpole{}, n_traj, horizon, rng);
      }
      std::ofstream os(out);
      if (!os) throw std::runtime_error("cannot write " + out);
      dr::write_trajectories_csv(os, trajs);
      std::cerr << "wrote " << trajs.size() << " trajectories to " << out << '\n';
      return 0;
    }
    if (*train) {
      const auto trajs = read_csv(data_path);
      const auto model = dr::train_named_model(model_name, dr::make_dataset(trajs), epochs,
                                               parse_widths(hidden), !no_norm, ensemble, seed);
      std::ofstream os(out);
      if (!os) throw std::runtime_error("cannot write " + out);
      dr::save_model(os, model);
      std::cerr << "trained " << dr::model_name(model) << " on " << trajs.size()
                << " trajectories\n";
      return 0;
    }
    if (*eval) {
      std::ifstream is(model_path);
      const auto model = dr::load_model(is);
      const auto test = read_csv(data_path);
      dr::ErrorProfile profile;
      if (mode == "logged") profile = dr::evaluate(model, test, dr::LoggedActions{});
      else if (mode == "recomputed")
        profile = dr::evaluate(model, test, dr::RecomputedActions{std::nullopt, seed});
      else profile = dr::one_step_error_profile(model, test);
      if (out.empty()) {
        dr::write_profile_csv(std::cout, profile);
      } else {
        std::ofstream os(out);
        dr::write_profile_csv(os, profile);
      }
      return 0;
    }
    if (*sweep) {
      if (list) {
        for (const auto& p : dr::preset_names()) std::cout << p << '\n';
        return 0;
      }
      if (target.empty()) target = preset_name;
      if (target.empty()) throw std::invalid_argument("sweep needs a preset name or config file");
      dr::SweepConfig cfg = resolve_config(target, full);
      if (seed_given) cfg.root_seed = seed;
      dr::RunOptions opts;
      opts.out_dir = out.empty() ? std::filesystem::path("results") / cfg.name
                                 : std::filesystem::path(out);
      opts.workers = workers;
      opts.only_cells = only_cells;
      opts.log = &std::cerr;
      const auto manifest = dr::run_sweep(cfg, opts);
      for (const auto& [k, v] : manifest.artifacts) std::cout << k << ": " << v << '\n';
      if (!manifest.all_succeeded()) {
        std::cerr << "some cells failed; see " << manifest.artifacts.at("manifest") << '\n';
        return 1;
      }
      return 0;
    }
    if (*plot) {
      dr::PlotSpec spec;
      spec.title = title;
      spec.log_y = !linear;
      spec.required_series = required;
      if (!series_by.empty()) spec.series_by = series_by;
      for (const auto& f : filters) {
        const auto eq = f.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("--filter expects column=value");
        spec.filters[f.substr(0, eq)] = f.substr(eq + 1);
      }
      dr::emit_plot(results, spec, out);
      std::cerr << "wrote " << out << '\n';
      return 0;
    }
    if (*report) {
      dr::SweepConfig cfg =
          config_path.empty() ? dr::preset(preset_name) : dr::SweepConfig::parse_file(config_path);
      if (seed_given) cfg.root_seed = seed;
      if (cfg.kind != dr::SweepKind::kDataTable) {
        throw std::invalid_argument("report needs a data_table config");
      }
      if (!out.empty()) {
        dr::RunOptions opts;
        opts.out_dir = out;
        dr::run_sweep(cfg, opts);
        std::ifstream is(std::filesystem::path(out) / "table_data.txt");
        std::cout << is.rdbuf();
      } else {
        std::cout << dr::format_data_table(dr::compute_data_table(cfg));
      }
      return 0;
    }
    if (*selftest) {
      return dr::run_selftest(std::cout, seed) ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
