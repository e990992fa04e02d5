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

// Declarative experiment sweeps. A config names a system family and grids
// over system parameters, training-set sizes, model variants and rollout
// modes; run_sweep trains and evaluates every cell of the cross product and
// writes one CSV row per (cell, step).
//
// Config files are flat `key = value` lines; `#` starts a comment and arrays
// are comma separated. See README.md for the key list.

#ifndef DYNROLLOUT_SWEEP_HPP_
#define DYNROLLOUT_SWEEP_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dynrollout/models.hpp"
#include "dynrollout/rollout.hpp"
#include "dynrollout/systems.hpp"

namespace dynrollout {

inline constexpr const char* kToolVersion = "0.1.0";

enum class SweepKind { kRollout, kDataTable, kSnr };
enum class SystemFamily { kStateSpace, kLorenz, kCartpole };

struct InitRange {
  double lo = 5.0;
  double hi = 10.0;
};

struct SweepConfig {
  std::string name = "sweep";
  SweepKind kind = SweepKind::kRollout;
  SystemFamily system = SystemFamily::kStateSpace;

  // State-space grid.
  std::vector<double> poles = {0.5};
  std::vector<double> noise_mults = {1.0};
  std::vector<std::size_t> dims = {3};
  std::vector<bool> regularized = {false};
  std::vector<bool> zero_inputs = {true};
  // Lorenz grid.
  std::vector<InitRange> lorenz_init = {{5.0, 10.0}};

  // Model grid. Hidden architectures are written like "256x256".
  std::vector<std::string> models = {"D"};
  std::vector<std::vector<std::size_t>> hidden = {{256, 256}};
  std::vector<bool> normalization = {true};
  std::vector<bool> angle_expand = {false};
  std::size_t ensemble_size = 5;
  std::size_t epochs = 20;

  std::vector<std::size_t> train_trajs = {20};
  std::size_t test_trajs = 50;
  std::size_t train_horizon = 100;
  std::size_t test_horizon = 100;
  // logged, recomputed or one_step.
  std::vector<std::string> modes = {"logged"};

  // Data-table and SNR experiments.
  std::size_t table_systems = 1000;
  std::vector<double> snr_dts = {0.25, 0.5, 0.75};
  double snr_noise_sigma = 1.0;
  std::size_t snr_trajectories = 1000;
  std::size_t snr_horizon = 5;

  std::uint64_t root_seed = 0;

  static SweepConfig parse(std::istream& is);
  static SweepConfig parse_file(const std::filesystem::path& path);
  // Canonical key = value text; parse(canonical()) round-trips.
  std::string canonical() const;
  std::uint64_t hash() const;
  void validate() const;
  std::size_t cell_count() const;
};

std::vector<std::string> preset_names();
// Desk-scale preset; `full` switches to 100 training and 100 test
// trajectories.
SweepConfig preset(const std::string& name, bool full = false);

struct SystemVariant {
  double pole = 0.0;
  double noise_mult = 1.0;
  std::size_t dim = 0;
  bool regularized = false;
  bool zero_inputs = true;
  InitRange lorenz{};
};

struct ModelVariant {
  std::string model;
  std::vector<std::size_t> hidden;
  bool normalization = true;
  bool angle_expand = false;

  // Model name plus tags for non-default architecture, normalization or
  // angle expansion, e.g. "D/h32/nonorm".
  std::string label(const std::vector<std::size_t>& default_hidden) const;
};

struct CellDescriptor {
  std::size_t index = 0;
  std::size_t system_index = 0;
  SystemVariant system;
  std::size_t train_trajs = 0;
  std::size_t model_index = 0;
  ModelVariant model;
  std::string mode;
  std::uint64_t test_seed = 0;
  std::uint64_t train_seed = 0;
  std::uint64_t model_seed = 0;
};

// Cells in output order.
std::vector<CellDescriptor> enumerate_cells(const SweepConfig& cfg);

struct CellOutcome {
  CellDescriptor cell;
  std::optional<ErrorProfile> profile;
  std::string error;
  double seconds = 0.0;
};

struct RunManifest {
  std::string experiment;
  std::uint64_t config_hash = 0;
  std::uint64_t root_seed = 0;
  std::string tool_version = kToolVersion;
  double wall_seconds = 0.0;
  std::size_t cell_count = 0;
  std::vector<CellOutcome> cells;
  std::map<std::string, std::string> artifacts;

  bool all_succeeded() const;
  void write_json(const std::filesystem::path& path) const;
};

struct RunOptions {
  std::filesystem::path out_dir = "results";
  std::size_t workers = 1;
  // Restrict execution to these cell indices (all when empty).
  std::vector<std::size_t> only_cells;
  std::ostream* log = nullptr;
};

// Trains one of ZERO, PERSIST, LIN, D, D-S, P, P-S, PE, PE-S, DE, DE-S with
// the default hyperparameters of its family.
DynamicsModel train_named_model(const std::string& name, const Dataset& data, std::size_t epochs,
                                const std::vector<std::size_t>& hidden, bool normalization,
                                std::size_t ensemble_size, std::uint64_t seed);

// Trains and evaluates one cell from scratch.
ErrorProfile run_cell(const SweepConfig& cfg, const CellDescriptor& cell);

RunManifest run_sweep(const SweepConfig& cfg, const RunOptions& options);

// Results CSV header shared by every rollout sweep.
inline constexpr const char* kResultsHeader =
    "experiment,pole,noise_mult,dim,regularized,model,formulation,train_trajs,mode,step,p50,"
    "p65,p95,n";

void write_results_csv(std::ostream& os, const SweepConfig& cfg,
                       const std::vector<CellOutcome>& outcomes);

struct DataTableRow {
  double pole = 0.0;
  std::optional<double> transient_decay;  // nullopt = N.A.
  double delta_mean = 0.0;
  double delta_std = 0.0;
  double state_mean = 0.0;
  double state_std = 0.0;
};

// Mean transient decay over `cfg.table_systems` dim-3 systems with
// s0 ~ N(0, I), and label statistics of zero-input datasets, per pole.
std::vector<DataTableRow> compute_data_table(const SweepConfig& cfg);
std::string format_data_table(const std::vector<DataTableRow>& rows);
void write_data_table_csv(std::ostream& os, const std::vector<DataTableRow>& rows);

struct SnrRow {
  double dt = 0.0;
  double snr = 0.0;
};
std::vector<SnrRow> compute_snr_table(const SweepConfig& cfg);

}  // namespace dynrollout

#endif  // DYNROLLOUT_SWEEP_HPP_
