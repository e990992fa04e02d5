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

// Synthetic dynamical systems, control policies and trajectory datasets:
// the pole-parameterized linear state-space family, the Lorenz system, the
// double integrator and a cart-pole balanced by LQR feedback.

#ifndef DYNROLLOUT_SYSTEMS_HPP_
#define DYNROLLOUT_SYSTEMS_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "dynrollout/numerics.hpp"

namespace dynrollout {

// Half-width of the default uniform process noise on every state.
inline constexpr double kBaseNoiseHalfWidth = 0.01;
// States with any coordinate beyond this magnitude count as diverged.
inline constexpr double kDivergenceBound = 1e12;

// s' = A s + B a + w, w_i ~ U(-0.01 noise_scale, 0.01 noise_scale).
// A is upper triangular with `pole` on the diagonal, so every eigenvalue
// equals the pole.
struct LinearSystem {
  Matrix a;
  Matrix b;
  double pole = 0.0;
  double noise_scale = 1.0;
  std::size_t dim = 0;
  bool regularized = false;
  bool zero_inputs = false;
  std::uint64_t seed = 0;

  std::size_t state_dim() const { return a.rows(); }
  std::size_t action_dim() const { return b.cols(); }
};

// Draws strict-upper entries of A and all entries of B from U(-1, 1). When
// `regularized`, rows whose absolute sum exceeds 3 have their off-diagonal
// entries scaled down so the row sum is exactly 3; the diagonal is kept.
LinearSystem sample_state_space(double pole, std::size_t dim, double noise_mult,
                                bool regularized, bool zero_inputs, Rng& rng);
LinearSystem sample_state_space(double pole, std::size_t dim, double noise_mult,
                                bool regularized, bool zero_inputs, std::uint64_t seed);

Vector step(const LinearSystem& sys, std::span<const double> s, std::span<const double> a,
            Rng& rng);

// A^t s0 + sum_{l<t} A^(t-l-1) B a_l, ignoring noise.
Vector closed_form_state(const LinearSystem& sys, std::span<const double> s0,
                         std::span<const Vector> actions, std::size_t t);

// Smallest k with ||A^k s0||_2 < threshold, or nullopt when `cap` steps are
// not enough (non-decaying transient).
std::optional<std::size_t> transient_decay_steps(const LinearSystem& sys,
                                                 std::span<const double> s0,
                                                 double threshold = 1e-4,
                                                 std::size_t cap = 1'000'000);

struct LorenzParams {
  double sigma = 10.0;
  double eta = 28.0;
  double beta = 8.0 / 3.0;
  double dt = 0.01;
};

Vector lorenz_derivative(std::span<const double> state, const LorenzParams& params);
// One classical Runge-Kutta step.
Vector lorenz_step(std::span<const double> state, const LorenzParams& params);

struct DoubleIntegrator {
  double dt = 0.5;
  double measurement_noise_sigma = 0.0;
};

struct ObservedTrajectory {
  std::vector<Vector> states;
  std::vector<Vector> observations;
};

// Exact zero-order-hold discretization under constant input u, H steps
// (H + 1 samples), observations corrupted by N(0, sigma^2) per coordinate.
ObservedTrajectory double_integrator_trajectory(const DoubleIntegrator& di, double u,
                                                std::size_t horizon, Rng& rng,
                                                std::span<const double> x0 = {});

// Mean over steps of ||s_t - s_(t-1)|| / ||o_t - o_(t-1)||. Steps whose
// observed change is zero are skipped.
double snr_estimate(std::span<const Vector> truth, std::span<const Vector> observations);

// State is (x, x_dot, theta, theta_dot) with theta = 0 upright.
struct Cartpole {
  double mass_cart = 1.0;
  double mass_pole = 0.1;
  double half_length = 0.5;
  double gravity = 9.81;
  double dt = 0.02;
  double state_noise_halfwidth = 0.1;
};

Vector cartpole_derivative(const Cartpole& cp, std::span<const double> s, double force);
// Explicit Euler step; `noisy` adds U(-h, h) to each coordinate.
Vector cartpole_step(const Cartpole& cp, std::span<const double> s, double force, Rng& rng,
                     bool noisy = true);

struct LinearizedDynamics {
  Matrix a;
  Matrix b;
};
// Euler-discretized linearization about the upright equilibrium.
LinearizedDynamics cartpole_linearization(const Cartpole& cp);

struct LqrSolution {
  Matrix gain;      // 1x4, control u = -K s
  Matrix riccati;   // P
  std::size_t iterations = 0;
};

// Discrete Riccati iteration with Q = q_scale I and R = r_scale on the
// linearized upright dynamics.
LqrSolution solve_lqr(const Cartpole& cp, double q_scale, double r_scale);
Matrix lqr_gains(const Cartpole& cp, double q_scale, double r_scale);

struct RandomUniformPolicy {
  double lo = -1.0;
  double hi = 1.0;
  std::size_t dim = 1;
};
// a = -K s
struct LinearFeedbackPolicy {
  Matrix gain;
};
struct ConstantPolicy {
  Vector action;
};
using Policy = std::variant<RandomUniformPolicy, LinearFeedbackPolicy, ConstantPolicy>;

Vector act(const Policy& policy, std::span<const double> s, Rng& rng);
std::size_t action_dim(const Policy& policy);

struct Trajectory {
  std::vector<Vector> states;   // H + 1
  std::vector<Vector> actions;  // H
  std::uint64_t system_seed = 0;
  std::uint64_t policy_seed = 0;
  bool diverged = false;
  // Set when the actions came from a deterministic feedback law that can be
  // replayed on predicted states.
  std::optional<Policy> policy;

  std::size_t horizon() const { return actions.size(); }
  std::size_t state_dim() const { return states.empty() ? 0 : states.front().size(); }
  std::size_t action_dim() const { return actions.empty() ? 0 : actions.front().size(); }
};

// Rolls `n_traj` trajectories of `horizon` steps from s0 ~ N(0, I). With
// `resample_system` every trajectory gets a fresh (A, B) with the same pole,
// dimension and flags as `system`. Each trajectory uses index-derived seeds.
std::vector<Trajectory> generate_dataset(const LinearSystem& system, const Policy& policy,
                                         std::size_t n_traj, std::size_t horizon, Rng& rng,
                                         bool resample_system);

// Initial coordinates independently U(init_lo, init_hi); no actions.
std::vector<Trajectory> generate_lorenz_dataset(double init_lo, double init_hi,
                                                std::size_t n_traj, std::size_t length,
                                                const LorenzParams& params, Rng& rng);

struct CartpoleDataConfig {
  double init_halfwidth = 0.05;
  double q_lo = 0.5;
  double q_hi = 2.0;
  double r_lo = 0.5;
  double r_hi = 2.0;
  // Gaussian perturbation added to the logged LQR force.
  double action_noise_sigma = 0.0;
};

// Each trajectory uses its own LQR controller with Q and R scales drawn
// log-uniformly from the configured ranges.
std::vector<Trajectory> generate_cartpole_dataset(const Cartpole& cp, std::size_t n_traj,
                                                  std::size_t horizon, Rng& rng,
                                                  const CartpoleDataConfig& data = {});

// CSV with header traj_id,t,s_0..,a_0..; the last row of each trajectory
// leaves the action fields empty.
void write_trajectories_csv(std::ostream& os, std::span<const Trajectory> trajs);
std::vector<Trajectory> read_trajectories_csv(std::istream& is);

// Formats with 17 significant digits.
std::string format_double(double v);

}  // namespace dynrollout

#endif  // DYNROLLOUT_SYSTEMS_HPP_
