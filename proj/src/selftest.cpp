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

#include "dynrollout/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <string>

#include "dynrollout/rollout.hpp"
#include "dynrollout/sweep.hpp"

namespace dynrollout {

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

bool closed_form_check(std::uint64_t seed) {
  Rng rng(seed);
  for (int k = 0; k < 10; ++k) {
    const LinearSystem sys = sample_state_space(rng.uniform(0.1, 0.95), 3 + rng.index(10), 0.0,
                                                false, false, rng);
    Vector s(sys.state_dim());
    for (double& v : s) v = rng.normal();
    const Vector s0 = s;
    std::vector<Vector> actions;
    for (int t = 0; t < 30; ++t) {
      actions.push_back({rng.uniform(-1.0, 1.0)});
      s = step(sys, s, actions.back(), rng);
    }
    const Vector c = closed_form_state(sys, s0, actions, actions.size());
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (std::abs(c[d] - s[d]) > 1e-10 * std::max(1.0, std::abs(s[d]))) return false;
    }
  }
  return true;
}

bool gradient_check(std::uint64_t seed, bool probabilistic) {
  Rng rng(seed);
  const std::size_t out = probabilistic ? 6 : 3;
  Mlp net = Mlp::initialized({4, 8, 8, out}, rng);
  Matrix x(5, 4);
  Matrix y(5, 3);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 4; ++j) x(i, j) = rng.normal();
    for (std::size_t j = 0; j < 3; ++j) y(i, j) = rng.normal();
  }
  auto loss = [&] { return probabilistic ? gaussian_nll(net, x, y) : mse_loss(net, x, y); };
  std::vector<double> grad(net.num_params());
  if (probabilistic) gaussian_nll_and_grad(net, x, y, grad);
  else mse_loss_and_grad(net, x, y, grad);
  const double h = 1e-6;
  for (int k = 0; k < 20; ++k) {
    const std::size_t p = rng.index(net.num_params());
    const double saved = net.params()[p];
    net.params()[p] = saved + h;
    const double up = loss();
    net.params()[p] = saved - h;
    const double down = loss();
    net.params()[p] = saved;
    const double numeric = (up - down) / (2 * h);
    if (std::abs(grad[p] - numeric) > 1e-5 * std::max(1.0, std::abs(numeric))) return false;
  }
  return true;
}

bool linear_recovery_check(std::uint64_t seed) {
  Rng rng(seed);
  const LinearSystem sys = sample_state_space(0.5, 3, 0.0, false, false, rng);
  const auto trajs = generate_dataset(sys, RandomUniformPolicy{}, 5, 30, rng, false);
  const LinearModel m = fit_linear_model(make_dataset(trajs));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      const double eye = i == j ? 1.0 : 0.0;
      if (std::abs(m.a_hat(i, j) + eye - sys.a(i, j)) > 1e-6) return false;
    }
    if (std::abs(m.b_hat(i, 0) - sys.b(i, 0)) > 1e-6) return false;
  }
  return true;
}

bool zero_baseline_check(std::uint64_t seed) {
  Rng rng(seed);
  const LinearSystem sys = sample_state_space(0.9, 3, 1.0, false, false, rng);
  const auto test = generate_dataset(sys, RandomUniformPolicy{}, 15, 40, rng, true);
  const ErrorProfile prof = evaluate(ZeroModel{3, false}, test, LoggedActions{});
  const StateRanges r = compute_ranges(test);
  for (std::size_t t = 1; t <= 40; ++t) {
    Vector col;
    for (const auto& traj : test) {
      double e = 0.0;
      for (std::size_t d = 0; d < 3; ++d) {
        const double z = traj.states[t][d] / (r.hi[d] - r.lo[d]);
        e += z * z;
      }
      col.push_back(e / 3.0);
    }
    if (rel_err(percentiles(col).p50, prof.per_step[t - 1].p50) > 1e-12) return false;
  }
  return true;
}

bool percentile_check(std::uint64_t seed) {
  Rng rng(seed);
  Vector v(101);
  for (double& x : v) x = rng.normal();
  const PercentileSummary p = percentiles(v);
  std::sort(v.begin(), v.end());
  return p.p50 == v[50] && p.p95 == v[95] && std::abs(p.p65 - v[65]) < 1e-15;
}

bool snr_check(std::uint64_t seed) {
  SweepConfig cfg = preset("snr");
  cfg.root_seed = seed;
  cfg.snr_trajectories = 200;
  const auto rows = compute_snr_table(cfg);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (!(rows[i].snr > rows[i - 1].snr)) return false;
  }
  return true;
}

bool determinism_check(std::uint64_t seed) {
  Rng rng(seed);
  const LinearSystem sys = sample_state_space(0.5, 3, 1.0, false, true, rng);
  const auto trajs = generate_dataset(sys, RandomUniformPolicy{}, 3, 20, rng, true);
  TrainConfig cfg = TrainConfig::deterministic();
  cfg.epochs = 2;
  cfg.hidden = {16};
  cfg.seed = seed;
  const Dataset data = make_dataset(trajs);
  return train_deterministic(data, cfg).net == train_deterministic(data, cfg).net;
}

}  // namespace

bool run_selftest(std::ostream& os, std::uint64_t seed) {
  const std::pair<const char*, std::function<bool()>> checks[] = {
      {"closed-form state equals iterated dynamics", [&] { return closed_form_check(seed); }},
      {"mse gradient matches central differences", [&] { return gradient_check(seed, false); }},
      {"gaussian nll gradient matches central differences",
       [&] { return gradient_check(seed, true); }},
      {"least squares recovers noise-free linear dynamics",
       [&] { return linear_recovery_check(seed); }},
      {"zero model profile equals normalized second moment",
       [&] { return zero_baseline_check(seed); }},
      {"percentiles agree with sorted order statistics", [&] { return percentile_check(seed); }},
      {"double-integrator snr increases with dt", [&] { return snr_check(seed); }},
      {"training is deterministic for a fixed seed", [&] { return determinism_check(seed); }},
  };
  bool all = true;
  for (const auto& [name, fn] : checks) {
    bool ok = false;
    std::string error;
    try {
      ok = fn();
    } catch (const std::exception& e) {
      error = e.what();
    }
    all = all && ok;
    os << (ok ? "PASS " : "FAIL ") << name;
    if (!error.empty()) os << " (" << error << ")";
    os << '\n';
  }
  return all;
}

}  // namespace dynrollout
