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

#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "dynrollout/sweep.hpp"

namespace dynrollout {

namespace {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd mean_std(const Vector& v) {
  MeanStd r;
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  for (double x : v) r.std += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(r.std / static_cast<double>(v.size()));
  return r;
}

}  // namespace

std::vector<DataTableRow> compute_data_table(const SweepConfig& cfg) {
  std::vector<DataTableRow> rows;
  for (std::size_t i = 0; i < cfg.poles.size(); ++i) {
    DataTableRow row;
    row.pole = cfg.poles[i];
    const std::uint64_t pole_seed = derive_seed(cfg.root_seed, i);

    // A single system that never decays makes the mean undefined.
    Rng decay_rng(derive_seed(pole_seed, 0));
    double total = 0.0;
    bool capped = false;
    for (std::size_t k = 0; k < cfg.table_systems && !capped; ++k) {
      const LinearSystem sys = sample_state_space(row.pole, 3, 1.0, false, true, decay_rng);
      Vector s0(3);
      for (double& v : s0) v = decay_rng.normal();
      const auto steps = transient_decay_steps(sys, s0);
      if (!steps) capped = true;
      else total += static_cast<double>(*steps);
    }
    if (!capped) row.transient_decay = total / static_cast<double>(cfg.table_systems);

    LinearSystem proto;
    proto.pole = row.pole;
    proto.dim = 3;
    proto.zero_inputs = true;
    proto.noise_scale = cfg.noise_mults.front();
    proto.a = Matrix(3, 3);
    proto.b = Matrix(3, 1);
    Rng data_rng(derive_seed(pole_seed, 1));
    const auto trajs = generate_dataset(proto, RandomUniformPolicy{}, cfg.train_trajs.front(),
                                        cfg.train_horizon, data_rng, true);
    Vector delta;
    Vector state;
    for (const auto& t : trajs) {
      for (std::size_t k = 0; k + 1 < t.states.size(); ++k) {
        delta.push_back(norm2(sub(t.states[k + 1], t.states[k])));
        state.push_back(norm2(t.states[k + 1]));
      }
    }
    const MeanStd d = mean_std(delta);
    const MeanStd s = mean_std(state);
    row.delta_mean = d.mean;
    row.delta_std = d.std;
    row.state_mean = s.mean;
    row.state_std = s.std;
    rows.push_back(row);
  }
  return rows;
}

std::string format_data_table(const std::vector<DataTableRow>& rows) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-8s %-16s %-22s %-22s\n", "pole", "transient decay",
                "delta-state label", "true-state label");
  os << buf;
  for (const auto& r : rows) {
    char decay[32];
    if (r.transient_decay) std::snprintf(decay, sizeof(decay), "%.1f", *r.transient_decay);
    else std::snprintf(decay, sizeof(decay), "N.A.");
    char delta[48];
    char state[48];
    std::snprintf(delta, sizeof(delta), "%.3g +- %.3g", r.delta_mean, r.delta_std);
    std::snprintf(state, sizeof(state), "%.3g +- %.3g", r.state_mean, r.state_std);
    std::snprintf(buf, sizeof(buf), "%-8g %-16s %-22s %-22s\n", r.pole, decay, delta, state);
    os << buf;
  }
  return os.str();
}

void write_data_table_csv(std::ostream& os, const std::vector<DataTableRow>& rows) {
  os << "pole,transient_decay,delta_mean,delta_std,state_mean,state_std\n";
  for (const auto& r : rows) {
    os << format_double(r.pole) << ','
       << (r.transient_decay ? format_double(*r.transient_decay) : std::string("N.A.")) << ','
       << format_double(r.delta_mean) << ',' << format_double(r.delta_std) << ','
       << format_double(r.state_mean) << ',' << format_double(r.state_std) << '\n';
  }
}

std::vector<SnrRow> compute_snr_table(const SweepConfig& cfg) {
  std::vector<SnrRow> rows;
  for (std::size_t i = 0; i < cfg.snr_dts.size(); ++i) {
    const DoubleIntegrator di{cfg.snr_dts[i], cfg.snr_noise_sigma};
    Rng rng(derive_seed(cfg.root_seed, i));
    double total = 0.0;
    for (std::size_t k = 0; k < cfg.snr_trajectories; ++k) {
      const auto traj = double_integrator_trajectory(di, 1.0, cfg.snr_horizon, rng);
      total += snr_estimate(traj.states, traj.observations);
    }
    rows.push_back({di.dt, total / static_cast<double>(cfg.snr_trajectories)});
  }
  return rows;
}

}  // namespace dynrollout
