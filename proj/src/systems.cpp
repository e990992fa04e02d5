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

#include "dynrollout/systems.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace dynrollout {

namespace {

bool out_of_bounds(std::span<const double> s) {
  return std::any_of(s.begin(), s.end(), [](double v) {
    return !std::isfinite(v) || std::abs(v) > kDivergenceBound;
  });
}

Vector standard_normal(std::size_t n, Rng& rng) {
  Vector v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

}  // namespace

LinearSystem sample_state_space(double pole, std::size_t dim, double noise_mult,
                                bool regularized, bool zero_inputs, Rng& rng) {
  if (dim == 0) throw std::invalid_argument("state-space system needs dim >= 1");
  if (!(noise_mult >= 0.0)) throw std::invalid_argument("noise multiplier must be >= 0");
  LinearSystem sys;
  sys.pole = pole;
  sys.dim = dim;
  sys.noise_scale = noise_mult;
  sys.regularized = regularized;
  sys.zero_inputs = zero_inputs;
  sys.seed = rng.seed();
  sys.a = Matrix(dim, dim);
  sys.b = Matrix(dim, 1);
  for (std::size_t r = 0; r < dim; ++r) {
    sys.a(r, r) = pole;
    for (std::size_t c = r + 1; c < dim; ++c) sys.a(r, c) = rng.uniform(-1.0, 1.0);
  }
  for (std::size_t r = 0; r < dim; ++r) {
    const double v = rng.uniform(-1.0, 1.0);
    sys.b(r, 0) = zero_inputs ? 0.0 : v;
  }
  if (regularized) {
    constexpr double kMaxRowSum = 3.0;
    for (std::size_t r = 0; r < dim; ++r) {
      double off = 0.0;
      for (std::size_t c = r + 1; c < dim; ++c) off += std::abs(sys.a(r, c));
      const double budget = kMaxRowSum - std::abs(pole);
      if (off + std::abs(pole) > kMaxRowSum && off > 0.0) {
        const double scale = std::max(budget, 0.0) / off;
        for (std::size_t c = r + 1; c < dim; ++c) sys.a(r, c) *= scale;
      }
    }
  }
  return sys;
}

LinearSystem sample_state_space(double pole, std::size_t dim, double noise_mult,
                                bool regularized, bool zero_inputs, std::uint64_t seed) {
  Rng rng(seed);
  return sample_state_space(pole, dim, noise_mult, regularized, zero_inputs, rng);
}

Vector step(const LinearSystem& sys, std::span<const double> s, std::span<const double> a,
            Rng& rng) {
  if (s.size() != sys.state_dim() || a.size() != sys.action_dim()) {
    throw ShapeError("step: state/action width does not match the system");
  }
  if (!all_finite(s)) throw NumericalError("step: non-finite input state");
  Vector next = matvec(sys.a, s);
  matvec_add(sys.b, a, next);
  const double h = kBaseNoiseHalfWidth * sys.noise_scale;
  if (h > 0.0) {
    for (double& v : next) v += rng.uniform(-h, h);
  }
  return next;
}

Vector closed_form_state(const LinearSystem& sys, std::span<const double> s0,
                         std::span<const Vector> actions, std::size_t t) {
  if (t > actions.size()) {
    throw std::out_of_range("closed form: t = " + std::to_string(t) + " exceeds " +
                            std::to_string(actions.size()) + " logged actions");
  }
  Vector state = matrix_power_apply(sys.a, s0, t);
  for (std::size_t l = 0; l < t; ++l) {
    Vector forced = matvec(sys.b, actions[l]);
    forced = matrix_power_apply(sys.a, forced, t - l - 1);
    for (std::size_t i = 0; i < state.size(); ++i) state[i] += forced[i];
  }
  return state;
}

std::optional<std::size_t> transient_decay_steps(const LinearSystem& sys,
                                                 std::span<const double> s0, double threshold,
                                                 std::size_t cap) {
  Vector x(s0.begin(), s0.end());
  for (std::size_t k = 0; k <= cap; ++k) {
    const double n = norm2(x);
    if (n < threshold) return k;
    if (!std::isfinite(n)) return std::nullopt;
    x = matvec(sys.a, x);
  }
  return std::nullopt;
}

Vector lorenz_derivative(std::span<const double> s, const LorenzParams& p) {
  return {p.sigma * (s[1] - s[0]), s[0] * (p.eta - s[2]) - s[1], s[0] * s[1] - p.beta * s[2]};
}

Vector lorenz_step(std::span<const double> state, const LorenzParams& p) {
  if (state.size() != 3) throw ShapeError("lorenz state must have 3 coordinates");
  if (!(p.dt > 0.0)) throw std::invalid_argument("lorenz dt must be positive");
  const double h = p.dt;
  auto offset = [&](const Vector& k, double f) {
    Vector out(state.begin(), state.end());
    for (std::size_t i = 0; i < 3; ++i) out[i] += f * k[i];
    return out;
  };
  const Vector k1 = lorenz_derivative(state, p);
  const Vector k2 = lorenz_derivative(offset(k1, h / 2), p);
  const Vector k3 = lorenz_derivative(offset(k2, h / 2), p);
  const Vector k4 = lorenz_derivative(offset(k3, h), p);
  Vector next(state.begin(), state.end());
  for (std::size_t i = 0; i < 3; ++i) next[i] += h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  return next;
}

ObservedTrajectory double_integrator_trajectory(const DoubleIntegrator& di, double u,
                                                std::size_t horizon, Rng& rng,
                                                std::span<const double> x0) {
  if (!(di.dt > 0.0)) throw std::invalid_argument("double integrator dt must be positive");
  if (di.measurement_noise_sigma < 0.0) throw std::invalid_argument("noise sigma must be >= 0");
  if (horizon < 2) throw std::invalid_argument("double integrator needs at least 2 steps");
  Vector x = x0.empty() ? Vector{0.0, 0.0} : Vector(x0.begin(), x0.end());
  if (x.size() != 2) throw ShapeError("double integrator state has 2 coordinates");
  const double dt = di.dt;
  ObservedTrajectory out;
  out.states.reserve(horizon + 1);
  out.observations.reserve(horizon + 1);
  for (std::size_t t = 0; t <= horizon; ++t) {
    if (t > 0) {
      x = {x[0] + dt * x[1] + 0.5 * dt * dt * u, x[1] + dt * u};
    }
    Vector o = x;
    for (double& v : o) v += rng.normal(0.0, di.measurement_noise_sigma);
    out.states.push_back(x);
    out.observations.push_back(std::move(o));
  }
  return out;
}

double snr_estimate(std::span<const Vector> truth, std::span<const Vector> observations) {
  if (truth.size() < 2 || truth.size() != observations.size()) {
    throw std::invalid_argument("snr: need >= 2 paired states and observations");
  }
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t t = 1; t < truth.size(); ++t) {
    const double denom = norm2(sub(observations[t], observations[t - 1]));
    if (denom == 0.0) continue;
    total += norm2(sub(truth[t], truth[t - 1])) / denom;
    ++used;
  }
  if (used == 0) throw NumericalError("snr: every observed change is zero");
  return total / static_cast<double>(used);
}

Vector cartpole_derivative(const Cartpole& cp, std::span<const double> s, double force) {
  const double total_mass = cp.mass_cart + cp.mass_pole;
  const double pole_ml = cp.mass_pole * cp.half_length;
  const double sin_t = std::sin(s[2]);
  const double cos_t = std::cos(s[2]);
  const double temp = (force + pole_ml * s[3] * s[3] * sin_t) / total_mass;
  const double theta_acc =
      (cp.gravity * sin_t - cos_t * temp) /
      (cp.half_length * (4.0 / 3.0 - cp.mass_pole * cos_t * cos_t / total_mass));
  const double x_acc = temp - pole_ml * theta_acc * cos_t / total_mass;
  return {s[1], x_acc, s[3], theta_acc};
}

Vector cartpole_step(const Cartpole& cp, std::span<const double> s, double force, Rng& rng,
                     bool noisy) {
  if (s.size() != 4) throw ShapeError("cartpole state has 4 coordinates");
  const Vector d = cartpole_derivative(cp, s, force);
  Vector next(s.begin(), s.end());
  for (std::size_t i = 0; i < 4; ++i) next[i] += cp.dt * d[i];
  if (noisy && cp.state_noise_halfwidth > 0.0) {
    for (double& v : next) v += rng.uniform(-cp.state_noise_halfwidth, cp.state_noise_halfwidth);
  }
  return next;
}

LinearizedDynamics cartpole_linearization(const Cartpole& cp) {
  const double total_mass = cp.mass_cart + cp.mass_pole;
  const double denom = cp.half_length * (4.0 / 3.0 - cp.mass_pole / total_mass);
  const double pole_ml = cp.mass_pole * cp.half_length;
  const double dtheta_dtheta = cp.gravity / denom;
  const double dtheta_du = -1.0 / (total_mass * denom);
  const double dx_dtheta = -pole_ml * dtheta_dtheta / total_mass;
  const double dx_du = 1.0 / total_mass - pole_ml * dtheta_du / total_mass;
  Matrix ac{{0, 1, 0, 0}, {0, 0, dx_dtheta, 0}, {0, 0, 0, 1}, {0, 0, dtheta_dtheta, 0}};
  Matrix bc{{0}, {dx_du}, {0}, {dtheta_du}};
  return {Matrix::identity(4) + cp.dt * ac, cp.dt * bc};
}

LqrSolution solve_lqr(const Cartpole& cp, double q_scale, double r_scale) {
  if (!(q_scale > 0.0) || !(r_scale > 0.0)) {
    throw std::invalid_argument("lqr: q_scale and r_scale must be positive");
  }
  constexpr std::size_t kMaxIterations = 10'000;
  constexpr double kTolerance = 1e-10;
  const auto [a, b] = cartpole_linearization(cp);
  const Matrix q = q_scale * Matrix::identity(4);
  const Matrix r{{r_scale}};
  const Matrix at = a.transpose();
  const Matrix bt = b.transpose();
  Matrix p = q;
  for (std::size_t it = 1; it <= kMaxIterations; ++it) {
    const Matrix pb = p * b;
    const Matrix gain = solve_linear(r + bt * pb, bt * p * a);
    const Matrix next = q + at * p * a - at * pb * gain;
    double delta = 0.0;
    double scale = 1.0;
    for (std::size_t i = 0; i < next.size(); ++i) {
      delta = std::max(delta, std::abs(next.data()[i] - p.data()[i]));
      scale = std::max(scale, std::abs(next.data()[i]));
    }
    p = next;
    if (delta <= kTolerance * scale) {
      const Matrix k = solve_linear(r + bt * p * b, bt * p * a);
      return {k, p, it};
    }
  }
  throw NumericalError("lqr: Riccati iteration did not converge");
}

Matrix lqr_gains(const Cartpole& cp, double q_scale, double r_scale) {
  return solve_lqr(cp, q_scale, r_scale).gain;
}

Vector act(const Policy& policy, std::span<const double> s, Rng& rng) {
  return std::visit(
      [&](const auto& p) -> Vector {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, RandomUniformPolicy>) {
          Vector a(p.dim);
          for (double& v : a) v = rng.uniform(p.lo, p.hi);
          return a;
        } else if constexpr (std::is_same_v<T, LinearFeedbackPolicy>) {
          Vector a = matvec(p.gain, s);
          for (double& v : a) v = -v;
          return a;
        } else {
          return p.action;
        }
      },
      policy);
}

std::size_t action_dim(const Policy& policy) {
  return std::visit(
      [](const auto& p) -> std::size_t {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, RandomUniformPolicy>) {
          return p.dim;
        } else if constexpr (std::is_same_v<T, LinearFeedbackPolicy>) {
          return p.gain.rows();
        } else {
          return p.action.size();
        }
      },
      policy);
}

std::vector<Trajectory> generate_dataset(const LinearSystem& system, const Policy& policy,
                                         std::size_t n_traj, std::size_t horizon, Rng& rng,
                                         bool resample_system) {
  if (n_traj == 0 || horizon == 0) {
    throw std::invalid_argument("dataset needs at least one trajectory and one step");
  }
  if (action_dim(policy) != system.action_dim()) {
    throw ShapeError("policy action width does not match the system input width");
  }
  const std::uint64_t base = rng.next_u64();
  std::vector<Trajectory> out(n_traj);
  for (std::size_t i = 0; i < n_traj; ++i) {
    Trajectory& traj = out[i];
    traj.system_seed = derive_seed(base, 2 * i);
    traj.policy_seed = derive_seed(base, 2 * i + 1);
    const LinearSystem sys =
        resample_system ? sample_state_space(system.pole, system.dim, system.noise_scale,
                                             system.regularized, system.zero_inputs,
                                             traj.system_seed)
                        : system;
    Rng local(traj.policy_seed);
    traj.states.reserve(horizon + 1);
    traj.actions.reserve(horizon);
    traj.states.push_back(standard_normal(sys.state_dim(), local));
    for (std::size_t t = 0; t < horizon; ++t) {
      Vector a = act(policy, traj.states.back(), local);
      Vector next = step(sys, traj.states.back(), a, local);
      traj.actions.push_back(std::move(a));
      if (out_of_bounds(next)) {
        traj.actions.pop_back();
        traj.diverged = true;
        break;
      }
      traj.states.push_back(std::move(next));
    }
  }
  return out;
}

std::vector<Trajectory> generate_lorenz_dataset(double init_lo, double init_hi,
                                                std::size_t n_traj, std::size_t length,
                                                const LorenzParams& params, Rng& rng) {
  if (!(init_lo < init_hi)) throw std::invalid_argument("lorenz: init_lo must be < init_hi");
  const std::uint64_t base = rng.next_u64();
  std::vector<Trajectory> out(n_traj);
  for (std::size_t i = 0; i < n_traj; ++i) {
    Trajectory& traj = out[i];
    traj.system_seed = base;
    traj.policy_seed = derive_seed(base, i);
    Rng local(traj.policy_seed);
    Vector s(3);
    for (double& v : s) v = local.uniform(init_lo, init_hi);
    traj.states.reserve(length + 1);
    traj.states.push_back(s);
    for (std::size_t t = 0; t < length; ++t) {
      traj.states.push_back(lorenz_step(traj.states.back(), params));
      traj.actions.emplace_back();
    }
  }
  return out;
}

std::vector<Trajectory> generate_cartpole_dataset(const Cartpole& cp, std::size_t n_traj,
                                                  std::size_t horizon, Rng& rng,
                                                  const CartpoleDataConfig& data) {
  if (n_traj == 0 || horizon == 0) {
    throw std::invalid_argument("dataset needs at least one trajectory and one step");
  }
  const std::uint64_t base = rng.next_u64();
  std::vector<Trajectory> out(n_traj);
  for (std::size_t i = 0; i < n_traj; ++i) {
    Trajectory& traj = out[i];
    traj.system_seed = derive_seed(base, 2 * i);
    traj.policy_seed = derive_seed(base, 2 * i + 1);
    Rng controller_rng(traj.system_seed);
    const double q = std::exp(controller_rng.uniform(std::log(data.q_lo), std::log(data.q_hi)));
    const double r = std::exp(controller_rng.uniform(std::log(data.r_lo), std::log(data.r_hi)));
    const Policy policy = LinearFeedbackPolicy{lqr_gains(cp, q, r)};
    traj.policy = policy;
    Rng local(traj.policy_seed);
    Vector s(4);
    for (double& v : s) v = local.uniform(-data.init_halfwidth, data.init_halfwidth);
    traj.states.push_back(s);
    for (std::size_t t = 0; t < horizon; ++t) {
      Vector a = act(policy, traj.states.back(), local);
      if (data.action_noise_sigma > 0.0) a[0] += local.normal(0.0, data.action_noise_sigma);
      Vector next = cartpole_step(cp, traj.states.back(), a[0], local);
      if (out_of_bounds(next)) {
        traj.diverged = true;
        break;
      }
      traj.actions.push_back(std::move(a));
      traj.states.push_back(std::move(next));
    }
  }
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_trajectories_csv(std::ostream& os, std::span<const Trajectory> trajs) {
  const std::size_t ds = trajs.empty() ? 0 : trajs.front().state_dim();
  std::size_t da = 0;
  for (const auto& t : trajs) da = std::max(da, t.action_dim());
  os << "traj_id,t";
  for (std::size_t i = 0; i < ds; ++i) os << ",s_" << i;
  for (std::size_t i = 0; i < da; ++i) os << ",a_" << i;
  os << '\n';
  for (std::size_t id = 0; id < trajs.size(); ++id) {
    const Trajectory& traj = trajs[id];
    if (traj.state_dim() != ds) throw ShapeError("trajectories differ in state width");
    for (std::size_t t = 0; t < traj.states.size(); ++t) {
      os << id << ',' << t;
      for (double v : traj.states[t]) os << ',' << format_double(v);
      for (std::size_t j = 0; j < da; ++j) {
        os << ',';
        if (t < traj.actions.size()) os << format_double(traj.actions[t][j]);
      }
      os << '\n';
    }
  }
}

std::vector<Trajectory> read_trajectories_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("trajectory csv: missing header");
  std::size_t ds = 0;
  std::size_t da = 0;
  {
    std::stringstream hs(line);
    std::string field;
    while (std::getline(hs, field, ',')) {
      if (field.rfind("s_", 0) == 0) ++ds;
      if (field.rfind("a_", 0) == 0) ++da;
    }
  }
  std::vector<Trajectory> out;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (fields.size() != 2 + ds + da) {
      throw std::runtime_error("trajectory csv: wrong field count on line " +
                               std::to_string(line_no));
    }
    const std::size_t id = std::stoul(fields[0]);
    const std::size_t t = std::stoul(fields[1]);
    if (id == out.size()) out.emplace_back();
    if (id + 1 != out.size() || t != out.back().states.size()) {
      throw std::runtime_error("trajectory csv: rows out of order on line " +
                               std::to_string(line_no));
    }
    Vector s(ds);
    for (std::size_t i = 0; i < ds; ++i) s[i] = std::stod(fields[2 + i]);
    out.back().states.push_back(std::move(s));
    const bool has_action = da > 0 && !fields[2 + ds].empty();
    if (has_action) {
      Vector a(da);
      for (std::size_t i = 0; i < da; ++i) a[i] = std::stod(fields[2 + ds + i]);
      out.back().actions.push_back(std::move(a));
    } else if (da == 0) {
      out.back().actions.emplace_back();
    }
  }
  // Action-free files log an (empty) action on every row, including the last.
  if (da == 0) {
    for (auto& traj : out) {
      if (!traj.actions.empty()) traj.actions.pop_back();
    }
  }
  return out;
}

}  // namespace dynrollout
